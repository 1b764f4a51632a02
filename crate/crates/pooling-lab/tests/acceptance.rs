//! Acceptance gates for the whole workspace, numbered c1 through c13. Each
//! test prints one summary line on success; a failed assertion marks the
//! gate failed. The gates cover the exact solvers against independent
//! oracles, the regret guarantees on random ensembles, the published policy
//! orderings, and byte determinism of the command-line tool.

use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use pooling_core::engine::{simulate, MatchingOutcome, SimOptions};
use pooling_core::instance::{
    adversarial_gre_offline, adversarial_pb_offline, gen_2d_common_origin, gen_2d_heterogeneous,
    gen_uniform_1d, Arrival, CriticalityModel, Instance,
};
use pooling_core::metrics::{
    prepare_sweep, CellParam, GeneratorSpec, PolicySpec, SweepConfig, SweepReport,
};
use pooling_core::offline::{
    feasible_edges, lp_relaxation, marginals, marginals_definitional, opt_matching, opt_value,
    OptMode,
};
use pooling_core::policies::{
    make_gre, make_pb, BatchMode, BatchPolicy, Policy, PriceAdjustment, PriceSource,
};
use pooling_core::topology::{potential, JobType, Point2, TopologyId};
use pooling_core::verify::{
    all_hold, check_laminar, check_lower_bound_constructions, check_marginal_concentration,
    check_ml_mg_identity, check_offline_pb_bound, check_online_pb_bound,
};

const EPS: f64 = 1e-9;

fn sim(inst: &Instance, policy: &Policy) -> MatchingOutcome {
    let opts = SimOptions {
        record_trace: true,
        ..SimOptions::for_topology(inst.topology())
    };
    simulate(inst, policy, &opts).expect("simulation failed")
}

/// Random instance with any topology, scalar or planar types, n at most 10.
fn small_mixed_instance(rng: &mut ChaCha8Rng) -> Instance {
    let topology = *[
        TopologyId::MinCommonOrigin,
        TopologyId::Proximity,
        TopologyId::Separation,
        TopologyId::Pool2D,
    ]
    .choose(rng)
    .unwrap();
    let n = rng.random_range(1..=10);
    let d = rng.random_range(1..=n);
    let arrivals = (1..=n)
        .map(|id| {
            let job = if topology == TopologyId::Pool2D {
                let mut p = || Point2 {
                    x: rng.random::<f64>(),
                    y: rng.random::<f64>(),
                };
                JobType::trip(p(), p())
            } else {
                JobType::scalar(rng.random())
            };
            Arrival { id, t: None, job }
        })
        .collect();
    Instance::new(topology, CriticalityModel::CountWindow { d }, arrivals, 0).unwrap()
}

#[test]
fn c01_blossom_matches_brute_force() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for _ in 0..500 {
        let inst = small_mixed_instance(&mut rng);
        let fast = opt_matching(&inst, OptMode::Blossom).unwrap();
        let slow = opt_matching(&inst, OptMode::BruteForce).unwrap();
        // The two solvers add the chosen pair weights in different orders,
        // so equal optima can drift by an ulp; any real disagreement over
        // which matching wins shows up orders of magnitude above this.
        assert!(
            (fast.value - slow.value).abs() <= 1e-12,
            "solver disagreement on {:?} n={}: {} vs {}",
            inst.topology(),
            inst.n(),
            fast.value,
            slow.value
        );
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!("acceptance c1 solver oracle: pass (500 instances, {elapsed:.2?})");
}

#[test]
fn c02_lp_duality_and_potential_feasibility() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for i in 0..200u64 {
        let n = rng.random_range(2..=200);
        let inst = match i % 4 {
            0 => gen_uniform_1d(n, n, i).unwrap(),
            1 => gen_uniform_1d(n, rng.random_range(1..=20), i).unwrap(),
            2 => gen_2d_common_origin(n, rng.random_range(1..=20), i).unwrap(),
            _ => gen_2d_heterogeneous(n, rng.random_range(1..=20), i).unwrap(),
        };
        let lp = lp_relaxation(&inst).unwrap();
        let dual_objective: f64 = lp.duals.iter().sum();
        assert!(
            (lp.value - dual_objective).abs() <= 1e-6,
            "duality gap {} on instance {i}",
            (lp.value - dual_objective).abs()
        );
        let ip = opt_matching(&inst, OptMode::Blossom).unwrap().value;
        assert!(
            ip <= lp.value + 1e-6,
            "IP {ip} above LP {} on {i}",
            lp.value
        );
        for edge in feasible_edges(&inst).unwrap() {
            let pa = potential(inst.topology(), inst.job_type(edge.a)).unwrap();
            let pb = potential(inst.topology(), inst.job_type(edge.b)).unwrap();
            assert!(pa >= 0.0 && pb >= 0.0);
            assert!(
                pa + pb >= edge.w - EPS,
                "potential not dual feasible: {pa} + {pb} < {} on {i}",
                edge.w
            );
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    println!("acceptance c2 LP duality: pass (200 instances, {elapsed:.2?})");
}

#[test]
fn c03_offline_regret_bound_and_laminar_structure() {
    let pb = make_pb(TopologyId::MinCommonOrigin);
    for (n, seeds) in [(100usize, 0..500u64), (1000, 500..1000)] {
        for seed in seeds {
            let inst = gen_uniform_1d(n, n, seed).unwrap();
            let checks = check_offline_pb_bound(&inst).unwrap();
            assert!(
                all_hold(&checks),
                "bound failed: n={n} seed={seed} {checks:?}"
            );
            let laminar = check_laminar(&inst, &pb).unwrap();
            assert!(laminar.holds(), "laminar failed: n={n} seed={seed}");
        }
    }
    println!("acceptance c3 offline bound and laminar traces: pass (1000 instances)");
}

#[test]
fn c04_online_regret_bound() {
    for d in [5usize, 10, 20, 30] {
        for seed in 0..100u64 {
            let inst = gen_uniform_1d(1000, d, 3000 + seed).unwrap();
            let checks = check_online_pb_bound(&inst).unwrap();
            assert!(
                all_hold(&checks),
                "bound failed: d={d} seed={seed} {checks:?}"
            );
        }
    }
    println!("acceptance c4 online bound: pass (100 seeds x 4 densities, n=1000)");
}

#[test]
fn c05_lower_bound_constructions() {
    let started = Instant::now();
    let battery = check_lower_bound_constructions().unwrap();
    assert!(all_hold(&battery), "battery failed: {battery:?}");

    // Zero-price trap at eps = 0.1: regret at least 0.2 n.
    let n = 40;
    let inst = adversarial_gre_offline(n, 0.1).unwrap();
    let total = sim(&inst, &make_gre(TopologyId::MinCommonOrigin)).total_reward;
    let regret = opt_value(&inst).unwrap() - total;
    assert!(regret >= 0.2 * n as f64 - EPS, "trap regret {regret}");

    // Doubling family: potential-based regret grows with the depth k.
    for k in 0..=5u32 {
        let inst = adversarial_pb_offline(k).unwrap();
        let total = sim(&inst, &make_pb(TopologyId::MinCommonOrigin)).total_reward;
        let regret = opt_value(&inst).unwrap() - total;
        assert!(
            regret >= k as f64 / 4.0 - EPS,
            "doubling regret {regret} below {} at k={k}",
            k as f64 / 4.0
        );
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    println!(
        "acceptance c5 lower bound constructions: pass ({} battery checks, {elapsed:.2?})",
        battery.len()
    );
}

const FIG2_DENSITIES: [usize; 6] = [5, 10, 15, 20, 25, 30];

/// The shared density sweep behind c6, c7, and c9: uniform 1D, n = 1000,
/// 100 paired seeds per density, all four headline policies plus OPT.
fn density_sweep() -> &'static SweepReport {
    static REPORT: OnceLock<SweepReport> = OnceLock::new();
    REPORT.get_or_init(|| {
        let config = SweepConfig {
            generator: GeneratorSpec::Uniform1d,
            topology: None,
            n: 1000,
            cells: FIG2_DENSITIES
                .iter()
                .map(|&d| CellParam::Density(d))
                .collect(),
            base_seed: 20_000,
            seeds: 100,
            policies: vec![
                PolicySpec::Pb,
                PolicySpec::Gre,
                PolicySpec::Bat { gamma: None },
                PolicySpec::Rbat { gamma: None },
            ],
            include_opt: true,
        };
        prepare_sweep(config).unwrap().run().unwrap()
    })
}

fn sweep_mean(report: &SweepReport, policy: &str, cell: f64, metric: &str) -> f64 {
    report
        .rows
        .iter()
        .find(|r| {
            r.policy == policy && (r.density_or_window - cell).abs() < 1e-9 && r.metric == metric
        })
        .unwrap_or_else(|| panic!("missing row {policy}/{cell}/{metric}"))
        .mean
}

#[test]
fn c06_density_sweep_ratio_and_trend() {
    let started = Instant::now();
    let report = density_sweep();
    let mut pb_regrets = Vec::new();
    for &d in &FIG2_DENSITIES {
        let cell = d as f64;
        let pb_ratio = sweep_mean(report, "pb", cell, "ratio");
        let pb_regret = sweep_mean(report, "pb", cell, "regret");
        let gre_regret = sweep_mean(report, "gre", cell, "regret");
        assert!(pb_ratio >= 0.94, "pb ratio {pb_ratio} below 0.94 at d={d}");
        assert!(
            pb_regret < gre_regret,
            "pb regret {pb_regret} not below gre {gre_regret} at d={d}"
        );
        pb_regrets.push(pb_regret);
    }
    // Non-increasing trend, allowing one inversion of at most 5 percent.
    let mut inversions = 0;
    for w in pb_regrets.windows(2) {
        if w[1] > w[0] {
            inversions += 1;
            assert!(w[1] <= 1.05 * w[0], "inversion {} -> {}", w[0], w[1]);
        }
    }
    assert!(inversions <= 1, "{inversions} inversions in {pb_regrets:?}");
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 900.0, "took {elapsed:?}");
    println!(
        "acceptance c6 density sweep: pass (pb ratio {:.4}..{:.4}, {elapsed:.2?})",
        sweep_mean(report, "pb", 5.0, "ratio"),
        sweep_mean(report, "pb", 30.0, "ratio"),
    );
}

#[test]
fn c07_pb_beats_batching() {
    let report = density_sweep();
    for &d in &FIG2_DENSITIES {
        let cell = d as f64;
        let pb = sweep_mean(report, "pb", cell, "ratio");
        let bat = sweep_mean(report, "bat", cell, "ratio");
        let rbat = sweep_mean(report, "rbat", cell, "ratio");
        assert!(pb >= bat, "pb {pb} below bat {bat} at d={d}");
        assert!(
            pb >= rbat - 0.002,
            "pb {pb} below rbat {rbat} - 0.002 at d={d}"
        );
    }
    println!("acceptance c7 pb vs batching: pass (6 densities)");
}

#[test]
fn c08_heterogeneous_2d_ordering() {
    let config = SweepConfig {
        generator: GeneratorSpec::TwoDHeterogeneous,
        topology: None,
        n: 1000,
        cells: vec![
            CellParam::Window(10.0),
            CellParam::Window(20.0),
            CellParam::Window(30.0),
        ],
        base_seed: 40_000,
        seeds: 50,
        policies: vec![
            PolicySpec::Gre,
            PolicySpec::Pb,
            PolicySpec::Rbat { gamma: None },
        ],
        include_opt: true,
    };
    let report = prepare_sweep(config).unwrap().run().unwrap();
    for w in [10.0, 20.0, 30.0] {
        let gre = sweep_mean(&report, "gre", w, "ratio");
        let pb = sweep_mean(&report, "pb", w, "ratio");
        let rbat = sweep_mean(&report, "rbat", w, "ratio");
        assert!(rbat >= pb - 0.002, "rbat {rbat} below pb {pb} at W={w}");
        assert!(pb >= gre - 0.002, "pb {pb} below gre {gre} at W={w}");
    }
    println!("acceptance c8 heterogeneous 2d ordering: pass (rbat >= pb >= gre, 3 windows)");
}

#[test]
fn c09_saving_fraction_of_opt() {
    let report = density_sweep();
    let mean_saving = sweep_mean(report, "opt", 5.0, "saving_fraction");
    assert!(mean_saving >= 0.46, "mean saving {mean_saving} below 0.46");
    // Per-seed cap: pooling can never save more than half the solo total.
    for seed in 0..100u64 {
        let inst = gen_uniform_1d(1000, 5, 20_000 + seed).unwrap();
        let opt = opt_value(&inst).unwrap();
        let solo: f64 = (1..=inst.n())
            .map(|j| inst.job_type(j).value_1d().unwrap())
            .sum();
        let saving = opt / solo;
        assert!(
            saving <= 0.5 + 1e-12,
            "saving {saving} above half at seed {seed}"
        );
    }
    println!("acceptance c9 saving fraction: pass (mean {mean_saving:.4} at d=5, all <= 1/2)");
}

/// Offline scalar instance with every value a multiple of 2^-10, so all the
/// sums both marginal paths take stay exact in f64.
fn dyadic_instance(n: usize, rng: &mut ChaCha8Rng) -> Instance {
    let arrivals = (1..=n)
        .map(|id| Arrival {
            id,
            t: None,
            job: JobType::scalar(rng.random_range(0..=1024) as f64 / 1024.0),
        })
        .collect();
    Instance::new(
        TopologyId::MinCommonOrigin,
        CriticalityModel::CountWindow { d: n },
        arrivals,
        0,
    )
    .unwrap()
}

#[test]
fn c10_marginal_identity_and_fast_path() {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    for seed in 0..100u64 {
        let inst = gen_uniform_1d(50, 50, 5000 + seed).unwrap();
        let check = check_ml_mg_identity(&inst).unwrap();
        assert!(check.holds, "identity broke at seed {seed}: {check:?}");
        for j in 1..=inst.n() {
            let fast = marginals(&inst, j).unwrap();
            let slow = marginals_definitional(&inst, j).unwrap();
            assert!((fast.loss - slow.loss).abs() <= 1e-12);
            assert!((fast.gain - slow.gain).abs() <= 1e-12);
        }
        // On dyadic values every sum is exact, so the shortcut must agree
        // with the definition bit for bit.
        let exact = dyadic_instance(50, &mut rng);
        for j in 1..=exact.n() {
            let fast = marginals(&exact, j).unwrap();
            let slow = marginals_definitional(&exact, j).unwrap();
            assert_eq!(fast.loss, slow.loss, "loss differs at job {j} seed {seed}");
            assert_eq!(fast.gain, slow.gain, "gain differs at job {j} seed {seed}");
        }
    }
    println!("acceptance c10 marginal identity: pass (100 instances, exact on dyadic grids)");
}

#[test]
fn c11_marginal_concentration() {
    let started = Instant::now();
    let report = check_marginal_concentration(0.5, 1000, 10_000, 1111).unwrap();
    assert!(report.holds(), "concentration failed: {report:?}");
    // The potential identity makes the gain mean the mirror image of the
    // loss mean about the potential 1/4, so it obeys the same band.
    let gain_mean = 2.0 * 0.25 - report.mean;
    let drift = (1.0 - 0.5f64.powi(1000)) / 1000.0;
    assert!(
        (gain_mean - 0.25).abs() <= drift + 3.0 * report.std_error,
        "gain mean {gain_mean} outside band"
    );
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    println!(
        "acceptance c11 concentration: pass (loss mean {:.6}, {elapsed:.2?})",
        report.mean
    );
}

#[test]
fn c12_policy_equivalences() {
    // Proximity rewards make the potential constant, so the two index
    // policies rank candidates identically.
    let pb = make_pb(TopologyId::Proximity);
    let gre = make_gre(TopologyId::Proximity);
    for seed in 0..100u64 {
        let inst = gen_uniform_1d(200, 10, 6000 + seed)
            .unwrap()
            .retopologize(TopologyId::Proximity)
            .unwrap();
        assert_eq!(sim(&inst, &pb), sim(&inst, &gre), "diverged at seed {seed}");
    }
    // A zero discount leaves batch weights untouched.
    for seed in 0..50u64 {
        let mode = if seed % 2 == 0 {
            BatchMode::Full
        } else {
            BatchMode::Rolling
        };
        let inst = gen_uniform_1d(150, 8, 7000 + seed).unwrap();
        let adjusted = Policy::Batch(BatchPolicy {
            mode,
            adjustment: Some(PriceAdjustment {
                source: PriceSource::Potential,
                gamma: 0.0,
            }),
        });
        let plain = Policy::Batch(BatchPolicy {
            mode,
            adjustment: None,
        });
        assert_eq!(
            sim(&inst, &adjusted),
            sim(&inst, &plain),
            "diverged at seed {seed}"
        );
    }
    println!("acceptance c12 policy equivalences: pass (100 proximity + 50 batch instances)");
}

// ----------------------------------------------------------------- c13

fn lab(dir: &std::path::Path, args: &[&str]) -> Vec<u8> {
    let output = Command::new(env!("CARGO_BIN_EXE_pooling-lab"))
        .args(args)
        .current_dir(dir)
        .env_remove("POOLING_LAB_SEED")
        .output()
        .expect("failed to launch the binary");
    assert!(
        output.status.success(),
        "command {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&output.stderr)
    );
    output.stdout
}

fn read(dir: &std::path::Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("reading {name}: {e}"))
}

#[test]
fn c13_cli_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    lab(
        dir,
        &[
            "gen",
            "--kind",
            "uniform1d",
            "--n",
            "300",
            "--d",
            "12",
            "--seed",
            "7",
            "-o",
            "a.json",
        ],
    );
    lab(
        dir,
        &[
            "gen",
            "--kind",
            "uniform1d",
            "--n",
            "300",
            "--d",
            "12",
            "--seed",
            "7",
            "-o",
            "b.json",
        ],
    );
    assert_eq!(read(dir, "a.json"), read(dir, "b.json"), "gen differs");

    for (metrics, trace) in [("m1.json", "t1.jsonl"), ("m2.json", "t2.jsonl")] {
        lab(
            dir,
            &[
                "run", "-i", "a.json", "--policy", "pb", "--trace", trace, "-o", metrics,
            ],
        );
    }
    assert_eq!(read(dir, "m1.json"), read(dir, "m2.json"), "run differs");
    assert_eq!(
        read(dir, "t1.jsonl"),
        read(dir, "t2.jsonl"),
        "trace differs"
    );

    std::fs::write(
        dir.join("sweep.json"),
        r#"{
            "generator": "uniform1d",
            "n": 300,
            "cells": [{"density": 6}, {"density": 12}],
            "base_seed": 9,
            "seeds": 6,
            "policies": ["pb", "gre", {"rbat": {"gamma": 0.5}}],
            "include_opt": true
        }"#,
    )
    .unwrap();
    lab(
        dir,
        &[
            "sweep",
            "--config",
            "sweep.json",
            "--jobs",
            "1",
            "--csv",
            "s1.csv",
            "-o",
            "s1.json",
        ],
    );
    lab(
        dir,
        &[
            "sweep",
            "--config",
            "sweep.json",
            "--jobs",
            "8",
            "--csv",
            "s2.csv",
            "-o",
            "s2.json",
        ],
    );
    lab(
        dir,
        &[
            "sweep",
            "--config",
            "sweep.json",
            "--jobs",
            "8",
            "--csv",
            "s3.csv",
            "-o",
            "s3.json",
        ],
    );
    assert_eq!(
        read(dir, "s1.json"),
        read(dir, "s2.json"),
        "sweep json differs across jobs"
    );
    assert_eq!(
        read(dir, "s2.json"),
        read(dir, "s3.json"),
        "sweep json differs across reruns"
    );
    assert_eq!(
        read(dir, "s1.csv"),
        read(dir, "s2.csv"),
        "sweep csv differs across jobs"
    );
    assert_eq!(
        read(dir, "s2.csv"),
        read(dir, "s3.csv"),
        "sweep csv differs across reruns"
    );

    for out in ["d1.json", "d2.json"] {
        lab(dir, &["duals", "-i", "a.json", "-o", out]);
    }
    assert_eq!(read(dir, "d1.json"), read(dir, "d2.json"), "duals differ");

    for out in ["p1.json", "p2.json"] {
        lab(
            dir,
            &[
                "duals",
                "--table",
                "--generator",
                "uniform1d",
                "--n",
                "120",
                "--d",
                "10",
                "--train",
                "3",
                "--base-seed",
                "5",
                "--cells",
                "8",
                "-o",
                out,
            ],
        );
    }
    assert_eq!(
        read(dir, "p1.json"),
        read(dir, "p2.json"),
        "price tables differ"
    );

    for out in ["g1.json", "g2.json"] {
        lab(
            dir,
            &[
                "tune-gamma",
                "--mode",
                "rbat",
                "--generator",
                "uniform1d",
                "--n",
                "120",
                "--d",
                "8",
                "--train",
                "3",
                "--base-seed",
                "2",
                "--grid",
                "0,0.3,0.6",
                "-o",
                out,
            ],
        );
    }
    assert_eq!(read(dir, "g1.json"), read(dir, "g2.json"), "tuning differs");

    for out in ["v1.json", "v2.json"] {
        lab(
            dir,
            &["verify", "--check", "identity", "--seed", "3", "-o", out],
        );
    }
    assert_eq!(read(dir, "v1.json"), read(dir, "v2.json"), "verify differs");

    std::fs::write(
        dir.join("orders.csv"),
        "order_id,order_time,origin_x,origin_y,dest_x,dest_y\n\
         o2,5.0,0.0,0.0,120.0,50.0\n\
         o1,1.5,10.0,10.0,300.0,200.0\n\
         o3,9.0,50.0,20.0,40.0,400.0\n",
    )
    .unwrap();
    for out in ["i1.json", "i2.json"] {
        lab(dir, &["ingest", "orders.csv", "--window", "120", "-o", out]);
    }
    assert_eq!(read(dir, "i1.json"), read(dir, "i2.json"), "ingest differs");

    println!("acceptance c13 determinism: pass (7 command families byte-identical)");
}
