use super::{Decision, DropCause};

/// Plain FIFO admission: drop only when the packet does not fit.
pub fn enqueue_decision(queue_bytes: u64, size: u32, capacity_bytes: u64) -> Decision {
    if queue_bytes + u64::from(size) > capacity_bytes {
        Decision::Drop(DropCause::BufferOverflow)
    } else {
        Decision::Enqueue
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn admits_into_empty_queue() {
        assert_eq!(enqueue_decision(0, 1500, 1500), Decision::Enqueue);
    }

    #[test]
    fn drops_when_full() {
        assert_eq!(
            enqueue_decision(10_000, 1500, 10_000),
            Decision::Drop(DropCause::BufferOverflow)
        );
    }

    #[test]
    fn fills_a_bdp_buffer_exactly() {
        // 10 Mbps x 500 ms = 625 000 B, i.e. 416 full-size packets plus 1000 B.
        let capacity = 10_000_000u64 / 8 / 2;
        assert_eq!(capacity, 625_000);
        let mut backlog = 0u64;
        let mut admitted = 0;
        while enqueue_decision(backlog, 1500, capacity) == Decision::Enqueue {
            backlog += 1500;
            admitted += 1;
        }
        assert_eq!(admitted, 416);
        assert_eq!(enqueue_decision(backlog, 1000, capacity), Decision::Enqueue);
        assert_eq!(
            enqueue_decision(backlog, 1001, capacity),
            Decision::Drop(DropCause::BufferOverflow)
        );
    }
}
