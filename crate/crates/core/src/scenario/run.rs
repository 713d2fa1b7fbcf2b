use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::build::{build_network, BuiltNetwork};
use super::config::ScenarioConfig;
use super::export::{write_aggregate, write_outputs};
use super::validate::validate;
use super::ScenarioError;
use crate::kernel::{derive_seed, RngStream, RunLimit};
use crate::network::{AliceModule, BobModule, EveMode, EveModule, SpdModule};
use crate::protocols::{
    decoy_analyze, qber, resolve_detection, sift, AliceRecord, Basis, BobRecord, ClassCounts, ClassResult,
    DecoyAnalysis, IntensityClass, Outcome,
};

/// One data slot, joined across Alice and Bob.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlotRecord {
    pub slot: u64,
    pub alice_bit: u8,
    pub alice_basis: Basis,
    pub intensity_class: IntensityClass,
    pub bob_basis: Basis,
    pub outcome: Outcome,
    pub bob_bit: Option<u8>,
    pub sifted: bool,
    pub sampled: bool,
    /// Sifted and the bits disagree.
    pub error: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClickRow {
    pub time_ps: u64,
    pub detector_path: String,
    pub gate_index: u64,
}

/// Error rate over all sifted bits of slots emitted in one window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QberWindow {
    pub start_s: f64,
    pub end_s: f64,
    pub sifted: u64,
    pub errors: u64,
}

impl QberWindow {
    pub fn qber(&self) -> Option<f64> {
        (self.sifted > 0).then(|| self.errors as f64 / self.sifted as f64)
    }
}

/// Named counters and time series collected during a run. Series are
/// append-only with non-decreasing timestamps.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StatRecorder {
    counters: BTreeMap<String, u64>,
    series: BTreeMap<String, Vec<(f64, f64)>>,
}

impl StatRecorder {
    pub fn add(&mut self, name: &str, n: u64) {
        *self.counters.entry(name.to_owned()).or_default() += n;
    }

    pub fn record(&mut self, name: &str, time_s: f64, value: f64) -> Result<(), ScenarioError> {
        let s = self.series.entry(name.to_owned()).or_default();
        if let Some(&(last, _)) = s.last() {
            if time_s < last {
                return Err(ScenarioError::Analysis(format!(
                    "series `{name}`: time {time_s} s after {last} s"
                )));
            }
        }
        s.push((time_s, value));
        Ok(())
    }

    pub fn counters(&self) -> &BTreeMap<String, u64> {
        &self.counters
    }

    pub fn series(&self) -> &BTreeMap<String, Vec<(f64, f64)>> {
        &self.series
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoySummary {
    pub eta_sys: f64,
    pub y0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inconclusive: Option<String>,
    #[serde(default)]
    pub classes: Vec<ClassResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EveSummary {
    pub mode: EveMode,
    pub pulses_seen: u64,
    pub suppressed: u64,
    pub stolen_photons: u64,
    pub forwarded_photons: u64,
    pub intercepted: u64,
    pub resent: u64,
}

/// Per-run results; the first nine keys are the documented contract.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub pulses_sent: u64,
    pub detections: u64,
    pub sifted_bits: u64,
    pub qber: Option<f64>,
    pub key_rate_bps: Option<f64>,
    pub decoy_statistic: Option<f64>,
    pub attack_flag: Option<bool>,
    pub runtime_s: f64,
    pub seed: u64,
    pub scenario: String,
    pub slots: u64,
    pub reference_pulses: u64,
    pub double_clicks: u64,
    pub sampled_bits: u64,
    pub sampled_errors: u64,
    pub sifted_error_rate: Option<f64>,
    pub qber_abort: Option<bool>,
    pub max_window_qber: Option<f64>,
    pub decoy: Option<DecoySummary>,
    pub eve: Option<EveSummary>,
    pub events: u64,
    pub simulated_time_s: f64,
    pub warnings: u64,
    pub counters: BTreeMap<String, u64>,
}

/// Everything a run produced.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub summary: Summary,
    pub records: Vec<SlotRecord>,
    pub windows: Vec<QberWindow>,
    pub clicks: Vec<ClickRow>,
    pub recorder: StatRecorder,
    pub warnings: Vec<String>,
}

/// Seed of replication `index` under `master`.
pub fn replication_seed(master: u64, index: u32) -> u64 {
    derive_seed(master, &format!("replication/{index}"))
}

/// Runs one replication with exactly `seed`.
pub fn simulate(cfg: &ScenarioConfig, seed: u64, trace: Option<Box<dyn Write>>) -> Result<RunOutcome, ScenarioError> {
    let plan = validate(cfg).map_err(ScenarioError::Invalid)?;
    let mut built = build_network(plan, seed)?;
    if let Some(t) = trace {
        built.sim.set_trace(t);
    }
    let started = Instant::now();
    built.sim.run(RunLimit::unbounded())?;
    let runtime = started.elapsed().as_secs_f64();
    analyze(cfg, &built, seed, runtime)
}

fn analyze(cfg: &ScenarioConfig, built: &BuiltNetwork, seed: u64, runtime_s: f64) -> Result<RunOutcome, ScenarioError> {
    let sim = &built.sim;
    let plan = &built.plan;
    let mut recorder = StatRecorder::default();
    let mut records = Vec::new();
    let mut windows = Vec::new();
    let mut reference_pulses = 0;
    let mut sampled_bits = 0;
    let mut sampled_errors = 0;
    let mut qber_value = None;
    let mut decoy = None;
    let mut key_rate = None;

    let protocol = plan.protocol.as_ref();
    if let (Some(a), Some(b), Some(p)) = (&plan.alice, &plan.bob, protocol) {
        let alice = sim.module::<AliceModule>(a).expect("built");
        let bob = sim.module::<BobModule>(b).expect("built");
        let n = plan.pulses as usize;
        let (slots, bases, masks) = (alice.slots(), bob.bases(), bob.click_masks());
        if slots.len() != n || bases.len() != n {
            return Err(ScenarioError::Analysis(format!(
                "run ended with {} Alice slots and {} Bob bases, {n} expected",
                slots.len(),
                bases.len()
            )));
        }
        let mut rng = RngStream::derive(seed, &format!("{b}/double_click"));
        for (k, s) in slots.iter().enumerate() {
            if s.reference.is_some() {
                reference_pulses += 1;
                continue;
            }
            let m = masks[k];
            let (outcome, bob_bit) = resolve_detection(m & 1 != 0, m & 2 != 0, &mut rng);
            records.push(SlotRecord {
                slot: k as u64,
                alice_bit: s.bit,
                alice_basis: s.basis,
                intensity_class: s.class,
                bob_basis: bases[k],
                outcome,
                bob_bit,
                sifted: false,
                sampled: false,
                error: false,
            });
        }
        // Decoy and vacuum bits are disclosed with the class announcement,
        // so only signal slots enter the key.
        let keyed: Vec<usize> = (0..records.len())
            .filter(|&i| records[i].intensity_class == IntensityClass::Signal)
            .collect();
        let a_recs: Vec<AliceRecord> = keyed
            .iter()
            .map(|&i| AliceRecord {
                pulse_id: records[i].slot,
                bit: records[i].alice_bit,
                basis: records[i].alice_basis,
            })
            .collect();
        let b_recs: Vec<BobRecord> = keyed
            .iter()
            .map(|&i| BobRecord {
                pulse_id: records[i].slot,
                basis: records[i].bob_basis,
                outcome: records[i].outcome,
                bit: records[i].bob_bit,
            })
            .collect();
        let kept = sift(&a_recs, &b_recs).map_err(|e| ScenarioError::Analysis(e.to_string()))?;
        let sifted_idx: Vec<usize> = kept.iter().map(|&j| keyed[j]).collect();
        let pairs: Vec<(u8, u8)> = sifted_idx
            .iter()
            .map(|&i| (records[i].alice_bit, records[i].bob_bit.expect("detected")))
            .collect();
        let est = qber(&pairs, p.qber.sample_fraction, &mut RngStream::derive(seed, "qber/sample"));
        for (j, &i) in sifted_idx.iter().enumerate() {
            let r = &mut records[i];
            r.sifted = true;
            r.sampled = est.sampled[j];
            r.error = pairs[j].0 != pairs[j].1;
        }
        sampled_bits = est.sample_size() as u64;
        sampled_errors = est.errors as u64;
        qber_value = est.qber;
        let duration = plan.pulses as f64 * p.slot_period_s;
        if duration > 0.0 {
            key_rate = Some((pairs.len() as u64 - sampled_bits) as f64 / duration);
        }

        if let Some(w) = p.qber.window_s {
            let count = (duration / w).ceil().max(1.0) as usize;
            windows = (0..count)
                .map(|i| QberWindow {
                    start_s: i as f64 * w,
                    end_s: ((i + 1) as f64 * w).min(duration.max(w)),
                    sifted: 0,
                    errors: 0,
                })
                .collect();
            for r in records.iter().filter(|r| r.sifted) {
                let t = (r.slot + 1) as f64 * p.slot_period_s;
                let i = ((t / w) as usize).min(count - 1);
                windows[i].sifted += 1;
                windows[i].errors += r.error as u64;
            }
        }

        if let Some(d) = &p.decoy {
            let mut counts = [ClassCounts::default(); 3];
            for r in &records {
                let c = &mut counts[r.intensity_class.index()];
                c.slots += 1;
                c.detections += r.outcome.detected() as u64;
            }
            let model = built.channel_model.expect("decoy runs carry a channel model");
            let mpn = [d.signal_mpn, d.decoy_mpn, 0.0];
            let analysis = decoy_analyze(&counts, &mpn, &model, d.min_slots_per_class, d.attack_threshold);
            decoy = Some(match analysis {
                DecoyAnalysis::Conclusive { classes, .. } => DecoySummary {
                    eta_sys: model.eta_sys,
                    y0: model.y0,
                    inconclusive: None,
                    classes,
                },
                DecoyAnalysis::Inconclusive { reason } => DecoySummary {
                    eta_sys: model.eta_sys,
                    y0: model.y0,
                    inconclusive: Some(reason),
                    classes: Vec::new(),
                },
            });
        }

        for s in bob.telemetry() {
            if let Some(e) = s.error_estimate {
                recorder.record("controller.error_estimate_rad", s.time_s, e)?;
            }
            recorder.record("controller.correction_rad", s.time_s, s.correction)?;
            recorder.record("controller.references", s.time_s, s.references as f64)?;
        }
        recorder.add("bob.stray_clicks", bob.stray_clicks);
    }

    let mut clicks = Vec::new();
    for path in &built.detectors {
        let spd = sim.module::<SpdModule>(path).expect("built");
        recorder.add(&format!("{path}.late_pulses"), spd.late_pulses);
        clicks.extend(spd.clicks().iter().map(|c| ClickRow {
            time_ps: c.time.as_ps(),
            detector_path: path.clone(),
            gate_index: c.gate_index,
        }));
    }
    clicks.sort_by(|a, b| (a.time_ps, &a.detector_path, a.gate_index).cmp(&(b.time_ps, &b.detector_path, b.gate_index)));

    let eve = plan.eve.as_ref().map(|path| {
        let e = sim.module::<EveModule>(path).expect("built");
        let st = e.state();
        EveSummary {
            mode: e.mode(),
            pulses_seen: st.pulses_seen,
            suppressed: st.suppressed,
            stolen_photons: st.stored.len() as u64,
            forwarded_photons: st.forwarded_photons,
            intercepted: e.intercepted,
            resent: e.resent,
        }
    });

    let warnings: Vec<String> = sim
        .warnings()
        .iter()
        .map(|w| format!("{} ps {}: {}", w.time.as_ps(), w.module, w.message))
        .collect();

    let sifted_bits = records.iter().filter(|r| r.sifted).count() as u64;
    let sifted_errors = records.iter().filter(|r| r.error).count() as u64;
    let statistic = decoy
        .as_ref()
        .filter(|d| d.inconclusive.is_none())
        .map(|d| d.classes.iter().map(|c| c.z).fold(0.0, f64::max));
    let attack_flag = match (statistic, protocol.and_then(|p| p.decoy.as_ref())) {
        (Some(s), Some(d)) => Some(s > d.attack_threshold),
        _ => None,
    };
    let summary = Summary {
        pulses_sent: records.len() as u64,
        detections: records.iter().filter(|r| r.outcome.detected()).count() as u64,
        sifted_bits,
        qber: qber_value,
        key_rate_bps: key_rate,
        decoy_statistic: statistic,
        attack_flag,
        runtime_s,
        seed,
        scenario: cfg.name.clone(),
        slots: plan.pulses,
        reference_pulses,
        double_clicks: records.iter().filter(|r| r.outcome == Outcome::DoubleClick).count() as u64,
        sampled_bits,
        sampled_errors,
        sifted_error_rate: (sifted_bits > 0).then(|| sifted_errors as f64 / sifted_bits as f64),
        qber_abort: qber_value.zip(protocol).map(|(q, p)| q > p.qber.abort_threshold),
        max_window_qber: windows.iter().filter_map(|w| w.qber()).reduce(f64::max),
        decoy,
        eve,
        events: sim.events_processed(),
        simulated_time_s: sim.now().as_secs_f64(),
        warnings: warnings.len() as u64,
        counters: recorder.counters().clone(),
    };
    Ok(RunOutcome {
        summary,
        records,
        windows,
        clicks,
        recorder,
        warnings,
    })
}

/// Runs one replication and writes its files into `dir`.
pub fn run_to_dir(cfg: &ScenarioConfig, seed: u64, dir: &Path) -> Result<Summary, ScenarioError> {
    let out_err = |path: &Path, source| ScenarioError::Output {
        path: path.display().to_string(),
        source,
    };
    std::fs::create_dir_all(dir).map_err(|e| out_err(dir, e))?;
    let trace: Option<Box<dyn Write>> = if cfg.run.trace {
        let path = dir.join("trace.csv");
        let file = std::fs::File::create(&path).map_err(|e| out_err(&path, e))?;
        let mut w = std::io::BufWriter::new(file);
        writeln!(w, "time_ps,priority,seq,target_path,message_kind").map_err(|e| out_err(&path, e))?;
        Some(Box::new(w))
    } else {
        None
    };
    let outcome = simulate(cfg, seed, trace)?;
    write_outputs(dir, &outcome)?;
    Ok(outcome.summary)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; absent for a single value.
    pub std: Option<f64>,
    /// Normal-approximation 95 % interval of the mean.
    pub ci95_low: Option<f64>,
    pub ci95_high: Option<f64>,
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub replications: usize,
    pub master_seed: u64,
    pub seeds: Vec<u64>,
    /// Statistics of every numeric top-level summary key.
    pub metrics: BTreeMap<String, MetricStats>,
    /// How many replications had each boolean key true, over those where it
    /// was defined: `[true, defined]`.
    pub flags: BTreeMap<String, [usize; 2]>,
}

/// Mean, spread and flag counts over per-replication summaries, in
/// replication order.
pub fn aggregate(master_seed: u64, summaries: &[Summary]) -> Aggregate {
    let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut flags: BTreeMap<String, [usize; 2]> = BTreeMap::new();
    for s in summaries {
        let v = serde_json::to_value(s).expect("summary serializes");
        for (k, x) in v.as_object().expect("object") {
            if k == "seed" {
                continue;
            }
            match x {
                serde_json::Value::Number(n) => values.entry(k.clone()).or_default().push(n.as_f64().expect("finite")),
                serde_json::Value::Bool(b) => {
                    let e = flags.entry(k.clone()).or_default();
                    e[0] += *b as usize;
                    e[1] += 1;
                }
                _ => {}
            }
        }
    }
    let metrics = values
        .into_iter()
        .map(|(k, xs)| {
            let n = xs.len();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let std = (n > 1).then(|| (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
            let half = std.map(|s| 1.96 * s / (n as f64).sqrt());
            let stats = MetricStats {
                n,
                mean,
                std,
                ci95_low: half.map(|h| mean - h),
                ci95_high: half.map(|h| mean + h),
                min: xs.iter().copied().fold(f64::INFINITY, f64::min),
                max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            };
            (k, stats)
        })
        .collect();
    Aggregate {
        replications: summaries.len(),
        master_seed,
        seeds: summaries.iter().map(|s| s.seed).collect(),
        metrics,
        flags,
    }
}

fn thread_count(n: usize) -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    let bound = std::env::var("QKD_SIM_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&t| t > 0)
        .unwrap_or(available);
    bound.min(n).max(1)
}

/// Runs `n` replications with seeds derived from the config's master seed.
/// With an output directory, a single replication writes straight into it and
/// several write `rep_NNN/` subdirectories plus `aggregate.json`.
pub fn run_replications(
    cfg: &ScenarioConfig,
    n: u32,
    out_dir: Option<&Path>,
) -> Result<(Vec<Summary>, Aggregate), ScenarioError> {
    if n == 0 {
        return Err(ScenarioError::Invalid(vec![super::ConfigIssue {
            path: "run.replications".into(),
            message: "must be >= 1, got 0".into(),
        }]));
    }
    validate(cfg).map_err(ScenarioError::Invalid)?;
    let master = cfg.run.seed;
    let one = |i: u32| -> Result<Summary, ScenarioError> {
        let seed = replication_seed(master, i);
        match out_dir {
            Some(dir) if n == 1 => run_to_dir(cfg, seed, dir),
            Some(dir) => run_to_dir(cfg, seed, &dir.join(format!("rep_{i:03}"))),
            None => simulate(cfg, seed, None).map(|o| o.summary),
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count(n as usize))
        .build()
        .map_err(|e| ScenarioError::Analysis(format!("thread pool: {e}")))?;
    let summaries = pool.install(|| (0..n).into_par_iter().map(one).collect::<Result<Vec<_>, _>>())?;
    let agg = aggregate(master, &summaries);
    if let (Some(dir), true) = (out_dir, n > 1) {
        write_aggregate(&dir.join("aggregate.json"), &agg)?;
    }
    Ok((summaries, agg))
}
