mod common;

use common::{broad_density, well_conditioned_system};
use coverage_core::controllers::{sp_velocity, tvd_c_velocity, FastLoopState};
use coverage_core::engine::{coverage_cost, evaluate, reference_trajectory, sample_positions, sweep};
use coverage_core::moments::MomentOptions;
use coverage_core::{run, ControllerSpec, ConvexPolytope, DensityField, FastLoop, Scenario, Scheme};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn square() -> ConvexPolytope {
    ConvexPolytope::cuboid(&[-10.0, -10.0], &[10.0, 10.0]).unwrap()
}

fn scenario(density: DensityField, controller: &str, n: usize, seed: u64, horizon: f64) -> Scenario {
    let domain = square();
    Scenario {
        initial: sample_positions(&domain, n, seed).unwrap(),
        domain,
        density,
        controller: controller.parse().unwrap(),
        dt: 0.1,
        horizon,
        moments: MomentOptions::default(),
        seed,
    }
}

#[test]
fn cost_matches_monte_carlo() {
    let q = square();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for (field, t) in [(DensityField::Phi3, 2.0), (broad_density(2), 7.0)] {
        let p: Vec<f64> = (0..14).map(|_| rng.gen_range(-8.0..8.0)).collect();
        let h = coverage_cost(&p, &q, &field, t, &MomentOptions::default()).unwrap();
        let samples = 100_000;
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..samples {
            let x = [rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)];
            let d2 = p
                .chunks(2)
                .map(|a| (a[0] - x[0]).powi(2) + (a[1] - x[1]).powi(2))
                .fold(f64::INFINITY, f64::min);
            let v = 400.0 * d2 * field.eval(&x, t).unwrap();
            sum += v;
            sq += v * v;
        }
        let mean = sum / samples as f64;
        let se = ((sq / samples as f64 - mean * mean) / samples as f64).sqrt();
        assert!((h - mean).abs() < 3.0 * se, "{h} vs {mean} ± {se}");
    }
}

#[test]
fn lloyd_descends_to_a_stable_cvt() {
    let domain = square();
    let s = Scenario {
        initial: sample_positions(&domain, 6, 4).unwrap(),
        domain,
        density: DensityField::Uniform { dim: 2, value: 1.0 },
        controller: ControllerSpec::lloyd(1.0),
        dt: 1.0,
        horizon: 300.0,
        moments: MomentOptions::default(),
        seed: 4,
    };
    let trace = run(&s).unwrap();
    for w in trace.records.windows(2) {
        assert!(w[1].cost <= w[0].cost * (1.0 + 1e-12), "{} -> {}", w[0].cost, w[1].cost);
    }
    assert!(trace.final_tracking_error() < 1e-6, "{}", trace.final_tracking_error());
    let p = trace.final_positions();
    let eval = evaluate(p, 0.0, &s.domain, &s.density, &s.moments, true).unwrap();
    let system = eval.system(p, 1.0).unwrap();
    let cert = system.split(Scheme::Fresh).certify(&system, None, 0.9).unwrap();
    assert!(cert.lambda_min > 0.0 && cert.lambda_max <= 1.0 + 1e-6, "{cert:?}");
}

#[test]
fn long_fast_loop_recovers_the_exact_velocity() {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    for variant in [Scheme::Fresh, Scheme::TwoMinusOneDelayed] {
        let s = well_conditioned_system(&mut rng, 8, 2, &broad_density(2), 3.0, 100.0);
        let (exact, _) = tvd_c_velocity(&s.jacobian, &s.residual).unwrap();
        let settings = FastLoop {
            fast_steps: Some(10_000),
            ..FastLoop::new(1e-4, variant)
        };
        let mut state = FastLoopState::zeros(exact.len());
        let (u, cert) = sp_velocity(&mut state, &s.system, &settings).unwrap();
        assert!(cert.admissible);
        assert!((&u - &exact).norm() < 1e-3 * exact.norm(), "{variant}: {u} vs {exact}");
    }
}

#[test]
fn runs_are_deterministic() {
    for c in ["tvd-sp:0.1:two-minus-one-delayed", "tvd-c", "tvd-d:2"] {
        let s = scenario(DensityField::Phi2, c, 6, 5, 1.0);
        let (a, b) = (run(&s).unwrap(), run(&s).unwrap());
        assert_eq!(a, b);
        let (mut x, mut y) = (Vec::new(), Vec::new());
        a.write_csv(&mut x).unwrap();
        b.write_csv(&mut y).unwrap();
        assert_eq!(x, y);
    }
}

#[test]
fn trace_files_have_the_documented_layout() {
    let s = scenario(DensityField::Phi1, "tvd-sp:0.05", 4, 2, 0.5);
    let trace = run(&s).unwrap();
    let dir = tempfile::tempdir().unwrap();
    trace.write_to(dir.path()).unwrap();

    let mut reader = csv::Reader::from_path(dir.path().join("trace.csv")).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["step", "t", "agent", "px", "py", "ux", "uy", "track_err", "H_total"]);
    let rows: Vec<Vec<f64>> = reader
        .records()
        .map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 6 * 4);
    for (k, row) in rows.iter().enumerate() {
        let rec = &trace.records[k / 4];
        let i = k % 4;
        assert_eq!(row[0] as usize, k / 4);
        assert_eq!(row[2] as usize, i);
        assert_eq!(&row[3..5], &rec.positions[2 * i..2 * i + 2]);
        assert_eq!(&row[5..7], &rec.controls[2 * i..2 * i + 2]);
        assert_eq!(row[7], rec.tracking[i]);
        assert_eq!(row[8], rec.cost);
    }

    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(json["controller"], "tvd-sp0.05");
    assert_eq!(json["agents"], 4);
    assert_eq!(json["dim"], 2);
    assert_eq!(json["steps"], 5);
    assert_eq!(json["total_cost"].as_f64().unwrap(), trace.total_cost());
    let left: f64 = rows.iter().filter(|r| r[2] == 0.0 && r[0] < 5.0).map(|r| r[8] * 0.1).sum();
    assert!((left - trace.total_cost()).abs() < 1e-12 * left);
    assert!(json["certificate"]["max_gamma"].is_number());
    assert!(json["certificate"]["initial"]["step"].is_number());
}

#[test]
fn three_dimensional_trace_has_z_columns() {
    let domain = ConvexPolytope::cuboid(&[-10.0; 3], &[10.0; 3]).unwrap();
    let s = Scenario {
        initial: sample_positions(&domain, 5, 1).unwrap(),
        domain,
        density: DensityField::Phi4,
        controller: "lloyd".parse().unwrap(),
        dt: 0.1,
        horizon: 0.2,
        moments: MomentOptions::default(),
        seed: 1,
    };
    let trace = run(&s).unwrap();
    assert_eq!(trace.csv_header(), "step,t,agent,px,py,pz,ux,uy,uz,track_err,H_total");
}

#[test]
fn exact_law_tracks_exponentially() {
    let s = scenario(DensityField::Phi1, "tvd-c", 5, 1, 1.0);
    let trace = reference_trajectory(&s).unwrap();
    let norm = |r: &coverage_core::engine::StepRecord| r.tracking.iter().map(|e| e * e).sum::<f64>().sqrt();
    let e0 = norm(&trace.records[0]);
    for r in &trace.records {
        let want = (-r.t).exp() * e0;
        assert!((norm(r) - want).abs() <= 0.01 * want, "t={}: {} vs {want}", r.t, norm(r));
    }
}

#[test]
fn sweep_reports_one_gap_per_epsilon() {
    let s = scenario(broad_density(2), "tvd-c", 3, 6, 0.5);
    let report = sweep(&s, &[0.04, 0.02, 0.01]).unwrap();
    assert_eq!(report.gaps.len(), 3);
    assert_eq!(report.ratios.len(), 2);
    assert!(report.gaps.iter().all(|g| g.is_finite() && *g > 0.0));
    assert!(report.gaps[0] > report.gaps[2]);
    assert!(sweep(&s, &[0.1, 0.05]).is_err());
}
