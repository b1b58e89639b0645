//! Side-by-side report of two result directories.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use aqmsim_core::metrics::{DelayStats, DropAttribution, SCHEMA_VERSION};
use aqmsim_core::netsim::ScenarioConfig;
use serde::{Deserialize, Serialize};

use crate::output::{read_json, write_json, Aggregate, AGGREGATE_FILE};
use crate::CliError;

pub const COMPARISON_FILE: &str = "comparison.json";
pub const CDF_FILE: &str = "qdelay_cdf.csv";
pub const BOXPLOT_FILE: &str = "downloads_boxplot.csv";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub a: f64,
    pub b: f64,
    /// `b - a`.
    pub delta: f64,
}

impl Delta {
    fn new(a: f64, b: f64) -> Self {
        Delta { a, b, delta: b - a }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLabel {
    pub dir: String,
    pub aqm: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub p5_ns: u64,
    pub p25_ns: u64,
    pub p50_ns: u64,
    pub p75_ns: u64,
    pub p95_ns: u64,
}

impl From<&DelayStats> for BoxStats {
    fn from(s: &DelayStats) -> Self {
        BoxStats {
            p5_ns: s.p5_ns,
            p25_ns: s.p25_ns,
            p50_ns: s.p50_ns,
            p75_ns: s.p75_ns,
            p95_ns: s.p95_ns,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DownloadComparison {
    pub size_bytes: u32,
    pub a: Option<BoxStats>,
    pub b: Option<BoxStats>,
    pub median_delta_ns: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub schema_version: u32,
    pub a: RunLabel,
    pub b: RunLabel,
    /// Per class (and `all`), per statistic (`p50_ns`, `max_ns`, ...).
    pub qdelay: BTreeMap<String, BTreeMap<String, Delta>>,
    pub utilization_mean: Option<Delta>,
    pub goodput_bps: BTreeMap<String, Delta>,
    pub drops_a: DropAttribution,
    pub drops_b: DropAttribution,
    pub downloads: Vec<DownloadComparison>,
}

/// Names of the scenario fields that differ in ways a comparison cannot
/// hide. The discipline and its parameters may differ; the topology,
/// traffic and length may not.
pub fn shape_mismatches(a: &ScenarioConfig, b: &ScenarioConfig) -> Vec<&'static str> {
    let mut out = Vec::new();
    let mut check = |name, same: bool| {
        if !same {
            out.push(name);
        }
    };
    check("preset", a.preset == b.preset);
    check("duration", a.duration == b.duration);
    check("bottleneck_rate_bps", a.bottleneck_rate_bps == b.bottleneck_rate_bps);
    check("bottleneck_owd", a.bottleneck_owd == b.bottleneck_owd);
    check("access_rate_bps", a.access_rate_bps == b.access_rate_bps);
    check("access_owd", a.access_owd == b.access_owd);
    check("far_access_owd", a.far_access_owd == b.far_access_owd);
    check("queue_capacity_bytes", a.queue_capacity() == b.queue_capacity());
    check(
        "flow counts",
        (a.n_cbr, a.n_sf, a.n_ftp, a.n_cbr_far, a.n_sf_far, a.n_ftp_far)
            == (b.n_cbr, b.n_sf, b.n_ftp, b.n_cbr_far, b.n_sf_far, b.n_ftp_far),
    );
    check("sf_sizes", a.sf_sizes == b.sf_sizes);
    check("cbr", (a.cbr_rate_bps, a.cbr_packet_size) == (b.cbr_rate_bps, b.cbr_packet_size));
    out
}

fn stat_deltas(a: &DelayStats, b: &DelayStats) -> BTreeMap<String, Delta> {
    let pairs = [
        ("mean_ns", a.mean_ns, b.mean_ns),
        ("p5_ns", a.p5_ns as f64, b.p5_ns as f64),
        ("p25_ns", a.p25_ns as f64, b.p25_ns as f64),
        ("p50_ns", a.p50_ns as f64, b.p50_ns as f64),
        ("p75_ns", a.p75_ns as f64, b.p75_ns as f64),
        ("p90_ns", a.p90_ns as f64, b.p90_ns as f64),
        ("p95_ns", a.p95_ns as f64, b.p95_ns as f64),
        ("p99_ns", a.p99_ns as f64, b.p99_ns as f64),
        ("max_ns", a.max_ns as f64, b.max_ns as f64),
    ];
    pairs
        .into_iter()
        .map(|(k, x, y)| (k.to_string(), Delta::new(x, y)))
        .collect()
}

pub fn compare_aggregates(a: &Aggregate, b: &Aggregate, label_a: RunLabel, label_b: RunLabel) -> Result<Comparison, CliError> {
    let mut mismatched = shape_mismatches(&a.scenario, &b.scenario);
    if a.replications != b.replications {
        mismatched.push("replications");
    }
    if !mismatched.is_empty() {
        return Err(CliError::Shape(mismatched.join(", ")));
    }
    let (sa, sb) = (&a.summary, &b.summary);
    let mut qdelay = BTreeMap::new();
    if let (Some(x), Some(y)) = (&sa.qdelay, &sb.qdelay) {
        qdelay.insert("all".to_string(), stat_deltas(x, y));
    }
    for (class, x) in &sa.qdelay_by_class {
        if let Some(y) = sb.qdelay_by_class.get(class) {
            qdelay.insert(class.clone(), stat_deltas(x, y));
        }
    }
    let utilization_mean = match (&sa.utilization, &sb.utilization) {
        (Some(x), Some(y)) => Some(Delta::new(x.mean, y.mean)),
        _ => None,
    };
    let goodput_bps = sa
        .goodput
        .iter()
        .filter_map(|(class, x)| {
            sb.goodput
                .get(class)
                .map(|y| (class.clone(), Delta::new(x.mean_bps, y.mean_bps)))
        })
        .collect();
    let sizes: std::collections::BTreeSet<u32> = sa
        .downloads
        .iter()
        .chain(&sb.downloads)
        .map(|d| d.size_bytes)
        .collect();
    let downloads = sizes
        .into_iter()
        .map(|size| {
            let pick = |s: &aqmsim_core::metrics::Summary| {
                s.download(size).and_then(|d| d.duration.as_ref()).map(BoxStats::from)
            };
            let (x, y) = (pick(sa), pick(sb));
            DownloadComparison {
                size_bytes: size,
                a: x,
                b: y,
                median_delta_ns: x.zip(y).map(|(x, y)| y.p50_ns as f64 - x.p50_ns as f64),
            }
        })
        .collect();
    Ok(Comparison {
        schema_version: SCHEMA_VERSION,
        a: label_a,
        b: label_b,
        qdelay,
        utilization_mean,
        goodput_bps,
        drops_a: sa.drops.attribution,
        drops_b: sb.drops.attribution,
        downloads,
    })
}

fn label(dir: &Path, agg: &Aggregate) -> RunLabel {
    RunLabel {
        dir: dir.display().to_string(),
        aqm: agg.scenario.aqm.to_string(),
    }
}

/// Reads `aggregate.json` from both directories and writes the comparison,
/// a queuing-delay CDF overlay and download-time boxplot data into `out`.
pub fn compare(dir_a: &Path, dir_b: &Path, out: &Path) -> Result<Comparison, CliError> {
    let a: Aggregate = read_json(&dir_a.join(AGGREGATE_FILE))?;
    let b: Aggregate = read_json(&dir_b.join(AGGREGATE_FILE))?;
    let report = compare_aggregates(&a, &b, label(dir_a, &a), label(dir_b, &b))?;

    let io = |path: &Path| {
        let shown = path.display().to_string();
        move |e: std::io::Error| CliError::Io(format!("{shown}: {e}"))
    };
    fs::create_dir_all(out).map_err(io(out))?;
    write_json(&out.join(COMPARISON_FILE), &report)?;

    let cdf_path = out.join(CDF_FILE);
    let mut cdf = String::from("class,fraction,a_ns,b_ns\n");
    for (class, qa) in &a.qdelay_quantiles_ns {
        let Some(qb) = b.qdelay_quantiles_ns.get(class) else {
            continue;
        };
        for (q, (x, y)) in qa.iter().zip(qb).enumerate() {
            cdf.push_str(&format!("{class},{},{x},{y}\n", q as f64 / 100.0));
        }
    }
    fs::File::create(&cdf_path)
        .and_then(|mut f| f.write_all(cdf.as_bytes()))
        .map_err(io(&cdf_path))?;

    let box_path = out.join(BOXPLOT_FILE);
    let mut boxes = String::from("size_bytes,run,p5_ns,p25_ns,p50_ns,p75_ns,p95_ns\n");
    for d in &report.downloads {
        for (run, stats) in [("a", d.a), ("b", d.b)] {
            if let Some(s) = stats {
                boxes.push_str(&format!(
                    "{},{run},{},{},{},{},{}\n",
                    d.size_bytes, s.p5_ns, s.p25_ns, s.p50_ns, s.p75_ns, s.p95_ns
                ));
            }
        }
    }
    fs::File::create(&box_path)
        .and_then(|mut f| f.write_all(boxes.as_bytes()))
        .map_err(io(&box_path))?;
    Ok(report)
}
