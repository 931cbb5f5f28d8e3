//! Acceptance run: one PASS/FAIL/SKIP line per criterion, non-zero exit on
//! any failure.
//!
//! Criterion 7 needs the real dataset and hours of compute; it runs only
//! when `NCARS_ROOT` is set and `EVSNN_LONG_RUN=1`.

mod common;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use common::chip::{chip_case, compare_with_rational};
use common::tape::random_case;
use evsnn::emu::{
    emulate_inference, equivalence_check, map_network, map_resources, quantize, ChipConstraints,
    Protocol, QuantizeConfig,
};
use evsnn::snn::{build_network, LifParams, Variant};
use serde_json::Value;

type Outcome = Result<String, String>;

struct Harness {
    failed: usize,
}

impl Harness {
    fn run(&mut self, id: &str, title: &str, f: impl FnOnce() -> Option<Outcome>) {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f))
            .unwrap_or_else(|p| Some(Err(panic_text(p))));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            None => println!("SKIP {id} {title}"),
            Some(Ok(detail)) => println!("PASS {id} {title}: {detail} ({secs:.1} s)"),
            Some(Err(detail)) => {
                self.failed += 1;
                println!("FAIL {id} {title}: {detail} ({secs:.1} s)");
            }
        }
    }
}

fn panic_text(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panicked".into())
}

fn check(ok: bool, detail: String) -> Option<Outcome> {
    Some(if ok { Ok(detail) } else { Err(detail) })
}

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let spent = start.elapsed();
    if spent > limit {
        return Err(format!(
            "took {:.1} s, limit {} s",
            spent.as_secs_f64(),
            limit.as_secs()
        ));
    }
    Ok(())
}

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
}

fn evsnn(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_evsnn"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "evsnn {}: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn read_json(path: &Path) -> Result<Value, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_default()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn c1() -> Option<Outcome> {
    let net = build_network(Variant::Full128, LifParams::default(), 0);
    let c = ChipConstraints::default();
    let q = match quantize(&net, &QuantizeConfig::default()) {
        Ok(q) => q,
        Err(e) => return Some(Err(e.to_string())),
    };
    let start = Instant::now();
    let mapped = map_resources(&q, &c).and_then(|r| Ok((r, map_network(&net, &c)?)));
    let secs = start.elapsed().as_secs_f64();
    let (r, plain) = match mapped {
        Ok(v) => v,
        Err(e) => return Some(Err(e.to_string())),
    };
    check(
        r.total_compartments == 54_274
            && r.total_synapses == 5_122_048
            && plain.total_synapses == r.total_synapses
            && r.feasible
            && secs < 1.0,
        format!(
            "{} compartments, {} synapses, {} cores, mapped twice in {secs:.3} s",
            r.total_compartments, r.total_synapses, r.cores_used
        ),
    )
}

fn c2() -> Option<Outcome> {
    let first = |v| build_network(v, LifParams::default(), 0).dense_input_sizes()[0];
    let got = [
        first(Variant::Full128),
        first(Variant::Win50),
        first(Variant::Win100),
    ];
    check(
        got == [2048, 512, 1568],
        format!("dense inputs {got:?} for 128/50/100"),
    )
}

fn c3() -> Option<Outcome> {
    let net = build_network(Variant::Win50, LifParams::default(), 0);
    let q = match quantize(&net, &QuantizeConfig::default()) {
        Ok(q) => q,
        Err(e) => return Some(Err(e.to_string())),
    };
    let p = q.params;
    check(
        p.vth_mant == 10 && p.delta_v == 3276,
        format!(
            "vth_mant {}, delta_v {} at scale {}",
            p.vth_mant, p.delta_v, q.scale
        ),
    )
}

/// Gradient bit patterns of the first `count` accepted random cases.
fn gradient_cases(count: usize) -> Result<(usize, u64, Vec<u64>), String> {
    let (mut accepted, mut nonzero, mut seed) = (0, 0, 0u64);
    let mut bits = Vec::new();
    while accepted < count {
        let cases = [random_case(seed, false), random_case(seed, true)];
        seed += 1;
        let [Some(a), Some(b)] = cases else { continue };
        for c in [a, b] {
            if c.max_diff > 1e-10 || c.loss_diff > 1e-12 {
                return Err(format!("seed {}: max diff {:e}", seed - 1, c.max_diff));
            }
            nonzero += u64::from(c.nonzero);
            bits.extend(c.bits);
        }
        accepted += 1;
    }
    Ok((accepted, nonzero, bits))
}

fn hand_example() -> Result<f64, String> {
    use evsnn::snn::{forward_sequence, NetworkBuilder, Shape};
    use evsnn::stbp::{backward, ResetGradient};
    let mut net = NetworkBuilder::new(Shape::flat(1))
        .dense(1)
        .build_zeroed(LifParams::default());
    net.layers[0].weights[0] = 0.3;
    let inputs = vec![vec![1.0], vec![1.0]];
    let rec = forward_sequence(&net, &inputs, None).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for (mode, want) in [
        (ResetGradient::Detached, -1.375),
        (ResetGradient::ProductRule, -1.328125),
    ] {
        let g = backward(&net, &rec, &[1.0], mode).map_err(|e| e.to_string())?;
        let oracle =
            common::tape::oracle(&net, &inputs, &[1.0], mode == ResetGradient::ProductRule);
        worst = worst
            .max((g.layers[0].weights[0] - want).abs())
            .max((oracle.weights[0][0] - want).abs())
            .max((g.layers[0].bias[0] - oracle.bias[0][0]).abs());
    }
    if worst > 1e-12 {
        return Err(format!("hand example off by {worst:e}"));
    }
    Ok(worst)
}

fn c4(digests: &mut Vec<Vec<u64>>) -> Option<Outcome> {
    let start = Instant::now();
    let result = (|| -> Outcome {
        let (n, nonzero, bits) = pool(1).install(|| gradient_cases(60))?;
        digests.push(bits);
        let worst = hand_example()?;
        within(Duration::from_secs(30), start)?;
        Ok(format!(
            "{n} networks in both reset modes within 1e-10 ({nonzero} with nonzero gradient); hand example off by {worst:e}"
        ))
    })();
    Some(result)
}

const C5_NETS: u64 = 20;
const C5_FRAMES: usize = 100;

fn chip_traces() -> Vec<Vec<Vec<u8>>> {
    (0..C5_NETS)
        .map(|seed| {
            let case = chip_case(seed, C5_FRAMES);
            emulate_inference(&case.qnet, &case.frames, Protocol::default())
                .unwrap()
                .trace
        })
        .collect()
}

fn c5(digests: &mut Vec<Vec<Vec<Vec<u8>>>>) -> Option<Outcome> {
    let start = Instant::now();
    let result = (|| -> Outcome {
        let (mut steps, mut spikes, mut compared, mut boundary) = (0, 0, 0, 0);
        for seed in 0..C5_NETS {
            let case = chip_case(seed, C5_FRAMES);
            let run = compare_with_rational(&case, Protocol::default())
                .map_err(|e| format!("net {seed}: {e}"))?;
            steps += run.steps;
            spikes += run.spikes;
            let r = equivalence_check(
                &case.net,
                &case.qnet,
                &case.frames,
                Protocol::default(),
                None,
            )
            .map_err(|e| e.to_string())?;
            if !r.equivalent {
                return Err(format!(
                    "net {seed}: {} float/chip divergences",
                    r.divergence_count
                ));
            }
            compared += r.compared_spikes;
            boundary += r.boundary_count;
        }
        digests.push(pool(4).install(chip_traces));
        within(Duration::from_secs(60), start)?;
        Ok(format!(
            "{C5_NETS} networks x {C5_FRAMES} frames: {steps} steps bit-exact ({spikes} spikes); \
             {compared} float spikes compared, {boundary} at the threshold boundary, 0 divergent"
        ))
    })();
    Some(result)
}

struct Smoke {
    dir: tempfile::TempDir,
    run: PathBuf,
    emulate: Option<Value>,
}

fn emulate_args<'a>(qnet: &'a str, model: &'a str, out: &'a str, threads: &'a str) -> Vec<&'a str> {
    vec![
        "--threads",
        threads,
        "emulate",
        "--preset",
        "smoke",
        "--synthetic",
        "--qnet",
        qnet,
        "--model",
        model,
        "--out",
        out,
    ]
}

fn c6(smoke: &mut Option<Smoke>) -> Option<Outcome> {
    let result = (|| -> Outcome {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let run = dir.path().join("run");
        evsnn(&[
            "--threads",
            "4",
            "train",
            "--preset",
            "smoke",
            "--out",
            s(&run),
        ])?;
        let t = read_json(&run.join("train_report.json"))?;
        let q = dir.path().join("q");
        evsnn(&[
            "quantize",
            "--model",
            s(&run.join("model.json")),
            "--out",
            s(&q),
        ])?;
        let emu = dir.path().join("emu");
        let model = run.join("model.json");
        let qnet = q.join("qnet.json");
        evsnn(&emulate_args(s(&qnet), s(&model), s(&emu), "4"))?;
        let e = read_json(&emu.join("emulate_report.json"))?;
        *smoke = Some(Smoke {
            run,
            emulate: Some(e.clone()),
            dir,
        });

        let acc = t["acc_test"].as_f64().ok_or("no acc_test")?;
        let chip = e["acc_test"].as_f64().ok_or("no emulated acc_test")?;
        let drop = acc - chip;
        let divergent = e["equivalence"]["divergence_count"]
            .as_u64()
            .unwrap_or(u64::MAX);
        let detail = format!(
            "acc_test {acc:.4} (acc_s {:.4}), emulated {chip:.4} (acc_s {:.4}), drop {:.1} points, {divergent} divergent spikes",
            t["acc_s"].as_f64().unwrap_or(0.0),
            e["acc_s"].as_f64().unwrap_or(0.0),
            100.0 * drop
        );
        if acc >= 0.9 && drop <= 0.05 {
            Ok(detail)
        } else {
            Err(detail)
        }
    })();
    Some(result)
}

fn c7() -> Option<Outcome> {
    let root = std::env::var("NCARS_ROOT").ok()?;
    if std::env::var("EVSNN_LONG_RUN").as_deref() != Ok("1") {
        return None;
    }
    let result = (|| -> Outcome {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let run = dir.path().join("run");
        evsnn(&["train", "--data", &root, "--out", s(&run)])?;
        let t = read_json(&run.join("train_report.json"))?;
        let q = dir.path().join("q");
        evsnn(&[
            "quantize",
            "--model",
            s(&run.join("model.json")),
            "--out",
            s(&q),
        ])?;
        let emu = dir.path().join("emu");
        evsnn(&[
            "emulate",
            "--data",
            &root,
            "--qnet",
            s(&q.join("qnet.json")),
            "--out",
            s(&emu),
        ])?;
        let e = read_json(&emu.join("emulate_report.json"))?;
        let (acc, chip) = (
            t["acc_test"].as_f64().unwrap_or(0.0),
            e["acc_test"].as_f64().unwrap_or(0.0),
        );
        let verdict = |v: f64, target: f64| if v >= target { "met" } else { "below target" };
        Ok(format!(
            "offline acc_test {acc:.4} ({} 0.80), emulated {chip:.4} ({} 0.78); best effort, never fails",
            verdict(acc, 0.80),
            verdict(chip, 0.78)
        ))
    })();
    // Reported but never failing.
    Some(Ok(
        result.unwrap_or_else(|e| format!("run did not complete: {e}"))
    ))
}

fn c8(smoke: &Option<Smoke>) -> Option<Outcome> {
    let e = match smoke.as_ref().and_then(|s| s.emulate.as_ref()) {
        Some(e) => e,
        None => return Some(Err("no emulation report (criterion 6 did not run)".into())),
    };
    let (t, r, b) = (
        &e["timesteps_per_inference"],
        &e["replication"],
        &e["blank"],
    );
    check(
        *t == 17 && *r == 10 && *b == 7,
        format!("{t} timesteps per inference ({r} + {b} blank)"),
    )
}

fn c9(grads: &[Vec<u64>], traces: &[Vec<Vec<Vec<u8>>>], smoke: &Option<Smoke>) -> Option<Outcome> {
    let result = (|| -> Outcome {
        let again = pool(4).install(|| gradient_cases(60))?.2;
        if grads.first() != Some(&again) {
            return Err("gradients differ between runs / thread counts".into());
        }
        if traces.first() != Some(&pool(1).install(chip_traces)) {
            return Err("chip spike traces differ between runs / thread counts".into());
        }
        let smoke = smoke.as_ref().ok_or("criterion 6 artifacts missing")?;
        let short = smoke.dir.path().join("short");
        evsnn(&[
            "--threads",
            "1",
            "train",
            "--preset",
            "smoke",
            "--epochs",
            "5",
            "--out",
            s(&short),
        ])?;
        for name in [
            "epoch_0005.json",
            "epoch_0005.weights.bin",
            "epoch_0005.adam.bin",
        ] {
            let a = read(&smoke.run.join("checkpoints").join(name));
            let b = read(&short.join("checkpoints").join(name));
            if a.is_empty() || a != b {
                return Err(format!(
                    "checkpoint {name} differs between --threads 4 and --threads 1"
                ));
            }
        }
        let emu = smoke.dir.path().join("emu1");
        let qnet = smoke.dir.path().join("q/qnet.json");
        evsnn(&emulate_args(
            s(&qnet),
            s(&smoke.run.join("model.json")),
            s(&emu),
            "1",
        ))?;
        let e1 = read(&emu.join("emulate_report.json"));
        let e4 = read(&smoke.dir.path().join("emu/emulate_report.json"));
        if e1.is_empty() || e1 != e4 {
            return Err("emulation report differs between --threads 4 and --threads 1".into());
        }
        Ok("gradients, chip traces, epoch-5 checkpoint and emulation report identical across runs and 1/4 threads"
            .into())
    })();
    Some(result)
}

fn main() {
    let mut h = Harness { failed: 0 };
    let mut grads = Vec::new();
    let mut traces = Vec::new();
    let mut smoke = None;
    h.run("C1", "resource accounting", c1);
    h.run("C2", "architecture shapes", c2);
    h.run("C3", "parameter translation", c3);
    h.run("C4", "STBP gradient correctness", || c4(&mut grads));
    h.run("C5", "emulator equivalence", || c5(&mut traces));
    h.run("C6", "desk-scale training and emulation", || c6(&mut smoke));
    h.run(
        "C7",
        "full-dataset accuracy (needs NCARS_ROOT and EVSNN_LONG_RUN=1)",
        c7,
    );
    h.run("C8", "inference protocol bookkeeping", || c8(&smoke));
    h.run("C9", "determinism", || c9(&grads, &traces, &smoke));
    if h.failed > 0 {
        println!("{} criterion(s) failed", h.failed);
        std::process::exit(1);
    }
}
