//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails at the end if any criterion did.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::Rng;

use poms::archive::{
    load_archive, save_archive, Archive, BdSpec, BehaviourDescriptor, DimSpec, Elite,
};
use poms::envs::{bipedal_walker_bd_spec, kicker, striker, Env, EnvKind, GridSize, Variant};
use poms::manifold::{
    AeArchitecture, Autoencoder, GaussianSampler, ManifoldModel, MutationScale, Pca,
};
use poms::nn::mlp::Scratch;
use poms::nn::{decoder_jacobian, finite_diff_jacobian, init, Activation, MlpSpec, ParamVector};
use poms::rng;
use poms::runner::{
    default_workers, read_metrics, run_suite, Algorithm, ExperimentConfig, MetricsRecord,
};

struct Report {
    lines: Vec<(usize, bool, String)>,
}

impl Report {
    fn record(&mut self, n: usize, ok: bool, detail: String) {
        println!(
            "criterion {n}: {} {detail}",
            if ok { "PASS" } else { "FAIL" }
        );
        self.lines.push((n, ok, detail));
    }
}

fn random_params(spec: &Arc<MlpSpec>, r: &mut impl Rng, scale: f64) -> ParamVector {
    let v = (0..spec.param_count())
        .map(|_| r.random_range(-scale..scale))
        .collect();
    ParamVector::new(Arc::clone(spec), v).unwrap()
}

fn jacobian_oracle() -> (bool, String) {
    let start = Instant::now();
    let mut r = rng::seeded(101);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let m = r.random_range(2..=10);
        let p = r.random_range(10..=100);
        let h = r.random_range(4..=32);
        let spec =
            Arc::new(MlpSpec::uniform(vec![m, h, p], Activation::Elu, Activation::Linear).unwrap());
        let dec = random_params(&spec, &mut r, 1.0);
        let z: Vec<f64> = (0..m).map(|_| r.random_range(-1.5..1.5)).collect();
        let j = decoder_jacobian(&dec, &z).unwrap();
        let fd = finite_diff_jacobian(&dec, &z, 1e-5).unwrap();
        worst = worst.max(j.max_relative_error(&fd));
    }
    let secs = start.elapsed().as_secs_f64();
    (
        worst < 1e-4 && secs < 60.0,
        format!("max relative error {worst:.2e} over 100 decoders in {secs:.2}s"),
    )
}

fn gradient_oracle() -> (bool, String) {
    let mut r = rng::seeded(202);
    let mut worst: f64 = 0.0;
    let mut largest = 0;
    for trial in 0..10 {
        let width = 4 + trial * 2;
        let target = Arc::new(
            MlpSpec::uniform(vec![1, width], Activation::Linear, Activation::Linear).unwrap(),
        );
        let arch = AeArchitecture {
            hidden: 6 + trial % 3,
            latent: 2 + trial % 3,
        };
        let ae = Autoencoder::random(Arc::clone(&target), arch, &mut r).unwrap();
        let n_params = ae.encoder().len() + ae.decoder().len();
        assert!(n_params <= 1000);
        largest = largest.max(n_params);
        let batch: Vec<ParamVector> = (0..5)
            .map(|_| random_params(&target, &mut r, 1.0))
            .collect();
        let (loss, grad) = ae.loss_gradient(&batch).unwrap();
        assert!((loss - ae.loss(&batch).unwrap()).abs() < 1e-12);
        let ne = ae.encoder().len();
        let h = 1e-6;
        let perturbed = |i: usize, d: f64| {
            let (mut e, mut dv) = (
                ae.encoder().values().to_vec(),
                ae.decoder().values().to_vec(),
            );
            if i < ne {
                e[i] += d;
            } else {
                dv[i - ne] += d;
            }
            Autoencoder::from_parts(
                ae.encoder().with_values(e).unwrap(),
                ae.decoder().with_values(dv).unwrap(),
                Arc::clone(&target),
            )
            .unwrap()
            .loss(&batch)
            .unwrap()
        };
        for (i, &g) in grad.iter().enumerate() {
            let fd = (perturbed(i, h) - perturbed(i, -h)) / (2.0 * h);
            let denom = fd.abs().max(g.abs());
            // entries where both sides vanish carry no relative information
            if denom > 1e-7 {
                worst = worst.max((fd - g).abs() / denom);
            }
        }
    }
    (
        worst < 1e-4,
        format!("max relative error {worst:.2e} on autoencoders up to {largest} parameters"),
    )
}

fn pushforward_property() -> (bool, String) {
    let target =
        Arc::new(MlpSpec::uniform(vec![4, 5], Activation::Linear, Activation::Linear).unwrap());
    let p = target.param_count();
    let m = 4;
    let mut r = rng::seeded(303);
    let q = DMatrix::from_fn(p, m, |_, _| r.random_range(-1.0..1.0))
        .qr()
        .q();
    let mean: Vec<f64> = (0..p).map(|_| r.random_range(-1.0..1.0)).collect();
    let model = ManifoldModel::from(Pca::from_parts(target, mean, q.transpose()).unwrap());
    let z: Vec<f64> = (0..m).map(|_| r.random_range(-1.0..1.0)).collect();
    let sampler = GaussianSampler::new(
        &model
            .latent_covariance(&z, MutationScale::new(0.1).unwrap())
            .unwrap(),
    )
    .unwrap();
    let centre = model.decode(&z).unwrap();
    let n = 100_000;
    let mut sums = vec![(0.0, 0.0); m];
    for _ in 0..n {
        let d = model.decode(&sampler.sample(&z, &mut r).unwrap()).unwrap();
        for (c, s) in sums.iter_mut().enumerate() {
            let proj: f64 = d
                .values()
                .iter()
                .zip(centre.values())
                .zip(q.column(c).iter())
                .map(|((a, b), u)| (a - b) * u)
                .sum();
            s.0 += proj;
            s.1 += proj * proj;
        }
    }
    let vars: Vec<f64> = sums
        .iter()
        .map(|(s, s2)| s2 / n as f64 - (s / n as f64).powi(2))
        .collect();
    let ok = vars.iter().all(|v| (0.09..=0.11).contains(v));
    (ok, format!("variance along decoder columns {vars:.4?}"))
}

fn archive_invariants() -> (bool, String) {
    let spec = BdSpec::new(vec![
        DimSpec::Continuous {
            lo: 0.0,
            hi: 3.0,
            bins: 3,
        },
        DimSpec::Continuous {
            lo: 0.0,
            hi: 3.0,
            bins: 3,
        },
        DimSpec::Continuous {
            lo: 0.0,
            hi: 2.0,
            bins: 2,
        },
    ])
    .unwrap();
    let pspec =
        Arc::new(MlpSpec::uniform(vec![1, 1], Activation::Linear, Activation::Linear).unwrap());
    let elite = |v: f64, bd: Vec<f64>| Elite {
        params: ParamVector::new(Arc::clone(&pspec), vec![v, 0.0]).unwrap(),
        bd: BehaviourDescriptor::new(bd),
        eval_id: 0,
        loop_index: 0,
    };
    let mut failures = Vec::new();
    // exhaustive over cells, probing each one at its lower edge, centre and just under its upper edge
    let mut a = Archive::new(spec.clone());
    let mut prev = 0.0;
    for x in 0..3 {
        for y in 0..3 {
            for k in 0..2 {
                let bd = vec![x as f64, y as f64 + 0.5, k as f64 + 0.999];
                if !a.insert(elite(1.0, bd.clone())).unwrap() {
                    failures.push(format!("fresh cell {bd:?} rejected"));
                }
                if a.insert(elite(2.0, bd.clone())).unwrap() {
                    failures.push(format!("keep-first violated at {bd:?}"));
                }
                if a.coverage() < prev {
                    failures.push("coverage decreased".into());
                }
                prev = a.coverage();
            }
        }
    }
    if a.len() != 18 || a.coverage() != 1.0 || a.elites().any(|e| e.params.values()[0] != 1.0) {
        failures.push("full grid not filled with first elites".into());
    }
    for (out, inside) in [
        (vec![-5.0, 0.1, 0.1], vec![0.1, 0.1, 0.1]),
        (vec![9.0, 3.0, 2.0], vec![2.9, 2.9, 1.9]),
        (vec![3.0, -0.0, 7.0], vec![2.5, 0.0, 1.5]),
    ] {
        let c = spec
            .cell_of(&BehaviourDescriptor::new(out.clone()))
            .unwrap();
        if c != spec.cell_of(&BehaviourDescriptor::new(inside)).unwrap() {
            failures.push(format!("{out:?} not clamped to the edge cell"));
        }
    }
    // randomized insertion sequences with persistence
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng::seeded(404);
    for trial in 0..50 {
        let mut a = Archive::new(spec.clone());
        let mut first: BTreeMap<u64, f64> = BTreeMap::new();
        let mut prev = 0.0;
        for i in 0..r.random_range(1..60) {
            let bd = vec![
                r.random_range(-1.0..4.0),
                r.random_range(-1.0..4.0),
                r.random_range(-1.0..3.0),
            ];
            let cell = spec.cell_of(&BehaviourDescriptor::new(bd.clone())).unwrap();
            let before = a.len();
            let v = i as f64 + 0.25;
            let accepted = a.insert(elite(v, bd)).unwrap();
            if accepted != !first.contains_key(&cell.0) || a.len() != before + accepted as usize {
                failures.push(format!("trial {trial}: insert outcome wrong"));
            }
            first.entry(cell.0).or_insert(v);
            if a.coverage() < prev {
                failures.push(format!("trial {trial}: coverage decreased"));
            }
            prev = a.coverage();
        }
        if a.iter().any(|(c, e)| first[&c.0] != e.params.values()[0]) {
            failures.push(format!("trial {trial}: an incumbent was replaced"));
        }
        let path = dir.path().join(format!("a{trial}.bin"));
        save_archive(&path, &a).unwrap();
        let back = load_archive(&path).unwrap();
        if back != a {
            failures.push(format!("trial {trial}: round trip differs"));
        }
        let resaved = dir.path().join(format!("b{trial}.bin"));
        save_archive(&resaved, &back).unwrap();
        if std::fs::read(&path).unwrap() != std::fs::read(&resaved).unwrap() {
            failures.push(format!("trial {trial}: re-save not byte identical"));
        }
    }
    let ok = failures.is_empty();
    (
        ok,
        if ok {
            "exhaustive 3x3x2 grid and 50 random sequences".into()
        } else {
            failures.join("; ")
        },
    )
}

fn grid_cardinalities() -> (bool, String) {
    let striker = Env::new(EnvKind::Striker, Variant::Normal, GridSize::Full)
        .bd_spec()
        .total_cells();
    let kicker = Env::new(EnvKind::Kicker, Variant::Normal, GridSize::Full)
        .bd_spec()
        .total_cells();
    let walker = bipedal_walker_bd_spec().total_cells();
    let ok = (striker, walker, kicker) == (15300, 12500, 10000);
    (
        ok,
        format!("striker {striker}, walker {walker}, kicker {kicker}"),
    )
}

fn determinism(scratch: &Path) -> (bool, String) {
    let bin = env!("CARGO_BIN_EXE_poms");
    let mut outputs = Vec::new();
    for (i, workers) in [1, 8, 1, 8].into_iter().enumerate() {
        let out = scratch.join(format!("det-{i}"));
        let status = Command::new(bin)
            .args([
                "run",
                "--env",
                "kicker-lite-small",
                "--algorithm",
                "poms",
                "--seed",
                "7",
            ])
            .arg("--out")
            .arg(&out)
            .arg("--workers")
            .arg(workers.to_string())
            .output()
            .expect("spawn poms");
        if !status.status.success() {
            return (
                false,
                format!("run failed: {}", String::from_utf8_lossy(&status.stderr)),
            );
        }
        let dir = out.join("poms").join("7");
        outputs.push((
            std::fs::read(dir.join("metrics.csv")).unwrap(),
            std::fs::read(dir.join("archive.bin")).unwrap(),
        ));
    }
    let ok = outputs.windows(2).all(|w| w[0] == w[1]);
    (
        ok,
        "metrics.csv and archive.bin compared across 4 runs with 1 and 8 workers".into(),
    )
}

fn physics_oracles() -> (bool, String) {
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    // projectile from rest on the ground: range 2 vx vy / g, apex vy^2 / 2g
    let mut r = rng::seeded(505);
    for _ in 0..200 {
        let (vx, vy) = (r.random_range(-8.0..8.0), r.random_range(0.5..14.0));
        let mut sim = kicker::Simulator::new();
        sim.state.ball = [0.0, kicker::BALL_RADIUS];
        sim.state.airborne = false;
        sim.max_height = 0.0;
        sim.launch([vx, vy]);
        while sim.state.airborne {
            sim.step(None);
        }
        let range = 2.0 * vx * vy / kicker::GRAVITY;
        let apex = vy * vy / (2.0 * kicker::GRAVITY);
        worst = worst.max((sim.state.ball[0] - range).abs());
        worst = worst.max((sim.max_height - kicker::BALL_RADIUS - apex).abs());
    }
    if worst >= 1e-3 {
        failures.push(format!("projectile error {worst:.2e}"));
    }
    let env = Env::new(EnvKind::Striker, Variant::Normal, GridSize::Full);
    let spec = env.policy_spec();
    let mut scratch = Scratch::for_spec(&spec);
    let mut r = rng::seeded(506);
    let (mut escaped, mut rises, mut moved) = (0, 0, 0);
    for _ in 0..1000 {
        let theta = init::uniform(&spec, &mut r);
        let mut prev = f64::INFINITY;
        let t = striker::rollout_observed(&theta, false, false, &mut scratch, |sim| {
            let p = sim.state.puck;
            let lo = striker::PUCK_RADIUS - 1e-9;
            let hi = striker::ARENA - striker::PUCK_RADIUS + 1e-9;
            if p.iter().any(|&v| !(lo..=hi).contains(&v)) {
                escaped += 1;
            }
            let speed = sim.state.puck_speed();
            if sim.step > striker::ACTUATION_STEPS && speed > prev * (1.0 + 1e-12) {
                rises += 1;
            }
            prev = speed;
        });
        if t.final_position != striker::PUCK_START {
            moved += 1;
        }
    }
    if escaped > 0 || rises > 0 {
        failures.push(format!(
            "striker: {escaped} out-of-arena steps, {rises} post-actuation speed rises"
        ));
    }
    let ok = failures.is_empty();
    (
        ok,
        if ok {
            format!("projectile error {worst:.1e}; 1000 striker policies contained and decaying ({moved} moved the puck)")
        } else {
            failures.join("; ")
        },
    )
}

struct DeskResults {
    finals: BTreeMap<(String, Algorithm), f64>,
    runtime: BTreeMap<String, Duration>,
    poms_kicker: Vec<MetricsRecord>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn desk_suites(root: &Path) -> DeskResults {
    let seeds = [1, 2, 3, 4, 5];
    let workers = default_workers();
    let mut finals = BTreeMap::new();
    let mut runtime = BTreeMap::new();
    let mut poms_kicker = Vec::new();
    for env in poms::runner::desk_environments() {
        let start = Instant::now();
        for alg in Algorithm::ALL {
            let mut cfg = ExperimentConfig::desk(env, alg);
            cfg.output_dir = root.join(env.name());
            let (runs, _) = run_suite(&cfg, &seeds, workers).unwrap();
            let cover: Vec<f64> = runs.iter().map(|r| r.manifest.final_coverage).collect();
            println!("  {env} {alg}: final coverage {cover:.4?}");
            finals.insert((env.name(), alg), median(cover));
            if env.kind == EnvKind::Kicker && alg == Algorithm::Poms {
                poms_kicker = read_metrics(&runs[0].dir.join("metrics.csv")).unwrap();
            }
        }
        runtime.insert(env.name(), start.elapsed());
    }
    DeskResults {
        finals,
        runtime,
        poms_kicker,
    }
}

fn loop_mean(records: &[MetricsRecord], l: usize, f: impl Fn(&MetricsRecord) -> f64) -> f64 {
    let v: Vec<f64> = records
        .iter()
        .filter(|r| r.loop_index == l)
        .map(f)
        .collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn main() {
    let scratch: PathBuf = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let _ = std::fs::remove_dir_all(&scratch);
    std::fs::create_dir_all(&scratch).unwrap();
    let mut report = Report { lines: Vec::new() };

    let checks: [(usize, fn() -> (bool, String)); 5] = [
        (1, jacobian_oracle),
        (2, gradient_oracle),
        (3, pushforward_property),
        (4, archive_invariants),
        (5, grid_cardinalities),
    ];
    for (n, f) in checks {
        let (ok, detail) = f();
        report.record(n, ok, detail);
    }
    let (ok, detail) = determinism(&scratch);
    report.record(6, ok, detail);
    let (ok, detail) = physics_oracles();
    report.record(7, ok, detail);

    let desk = desk_suites(&scratch.join("desk"));
    let fin = |env: &str, alg: Algorithm| desk.finals[&(env.to_string(), alg)];
    let (s, k) = ("striker-lite-small", "kicker-lite-small");
    let slow: Vec<String> = desk
        .runtime
        .iter()
        .filter(|(_, d)| d.as_secs_f64() >= 1800.0)
        .map(|(e, d)| format!("{e} took {:.0}s", d.as_secs_f64()))
        .collect();
    let timing = desk
        .runtime
        .iter()
        .map(|(e, d)| format!("{e} {:.0}s", d.as_secs_f64()))
        .collect::<Vec<_>>()
        .join(", ");
    println!("  desk suite runtime: {timing}");

    let (pk, ik) = (fin(k, Algorithm::Poms), fin(k, Algorithm::MapeIso));
    let (ps, is) = (fin(s, Algorithm::Poms), fin(s, Algorithm::MapeIso));
    report.record(
        8,
        pk >= ik && ps >= is - 0.02 && slow.is_empty(),
        format!(
            "kicker poms {pk:.4} vs mape-iso {ik:.4}; striker poms {ps:.4} vs mape-iso {is:.4} {}",
            slow.join(" ")
        ),
    );

    let nk = fin(k, Algorithm::PomsNoJacobian);
    report.record(
        9,
        pk - nk >= 0.03,
        format!("kicker poms {pk:.4} vs poms-no-jacobian {nk:.4}"),
    );

    let mut worst = Vec::new();
    let mut ok10 = true;
    for env in [s, k] {
        let random = fin(env, Algorithm::PsUniform).max(fin(env, Algorithm::PsGlorot));
        let (lowest, alg) = Algorithm::ALL
            .iter()
            .filter(|a| !a.is_random_search())
            .map(|&a| (fin(env, a), a))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap();
        ok10 &= random <= lowest;
        worst.push(format!(
            "{env}: best random {random:.4} vs lowest archive method {alg} {lowest:.4}"
        ));
    }
    report.record(10, ok10, worst.join("; "));

    let rec = &desk.poms_kicker;
    let last = rec.iter().map(|r| r.loop_index).max().unwrap();
    let first_param = loop_mean(rec, 1, |r| r.param_fraction);
    let early =
        0.5 * (loop_mean(rec, 1, |r| r.latent_fraction) + loop_mean(rec, 2, |r| r.latent_fraction));
    let late = 0.5
        * (loop_mean(rec, last - 1, |r| r.latent_fraction)
            + loop_mean(rec, last, |r| r.latent_fraction));
    report.record(
        11,
        (first_param - 0.5).abs() <= 0.05 && late >= early,
        format!("loop 1 parameter fraction {first_param:.3}; latent fraction loops 1-2 {early:.3}, last two {late:.3}"),
    );

    let failed: Vec<usize> = report.lines.iter().filter(|l| !l.1).map(|l| l.0).collect();
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
    println!("all {} criteria passed", report.lines.len());
}
