//! Acceptance suite. Runs every criterion at its stated tolerance, prints one
//! PASS/FAIL line per criterion and exits non-zero if any failed.

use std::path::PathBuf;
use std::time::Instant;

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mab_core::analysis::{compare, dynamic, steady, sweep};
use mab_core::control::run_scenario;
use mab_core::verify::run_campaign;
use mab_core::zvs::{full_zvs_terms, general_solution, online_duty_ratios, online_solution, zvs_system_residual};
use mab_core::{DerivedParams, Modulation, OperatingPoint, PhaseShiftSet, Scenario, ZvsStatus};

type Outcome = Result<String, String>;

fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn golden(name: &str) -> Scenario {
    Scenario::load(&scenario_path(name)).expect("scenario file loads")
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let v = [400.0, 500.0, 200.0, 300.0];
    let n = [1.0, 1.0, 0.5, 1.0];
    let sol = online_duty_ratios(&v, &n).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();

    // exact rational evaluation of D_i = 1 - min M / M_i with M_i = n_1 V_i / (n_i V_1)
    let vr = [400i64, 500, 200, 300].map(Ratio::from_integer);
    let nr = [
        Ratio::from_integer(1i64),
        Ratio::from_integer(1),
        Ratio::new(1, 2),
        Ratio::from_integer(1),
    ];
    let m: Vec<Ratio<i64>> = (0..4).map(|i| nr[0] * vr[i] / (nr[i] * vr[0])).collect();
    let min = *m.iter().min().unwrap();
    let exact: Vec<Ratio<i64>> = m.iter().map(|mi| Ratio::from_integer(1) - min / *mi).collect();
    let expected = [
        Ratio::new(1, 4),
        Ratio::new(2, 5),
        Ratio::new(1, 4),
        Ratio::from_integer(0),
    ];
    let to_f64 = |r: &Ratio<i64>| *r.numer() as f64 / *r.denom() as f64;

    let rational_ok = exact == expected;
    let float_ok = sol.inner_ratios.iter().zip(&exact).all(|(d, r)| *d == to_f64(r));
    let config = golden("golden.json").config;
    let op = OperatingPoint::at_setpoints(
        &config,
        PhaseShiftSet::new(vec![0.0, 0.05, 0.03, 0.15], sol.inner_ratios.clone()).unwrap(),
    )
    .map_err(|e| e.to_string())?;
    let two_level = (0..200).all(|k| {
        let t = k as f64 / 100.0 * op.config().half_period;
        op.switched_node_voltage(3, t).unwrap().abs() == 300.0
    });
    check(
        rational_ok && float_ok && two_level && elapsed.as_millis() < 100,
        format!(
            "D = {:?} (rational {:?}), v_s4 two-level: {two_level}, {:.3} ms",
            sol.inner_ratios,
            exact.iter().map(|r| r.to_string()).collect::<Vec<_>>(),
            elapsed.as_secs_f64() * 1e3
        ),
    )
}

fn random_derived(rng: &mut ChaCha8Rng, n: usize) -> DerivedParams {
    let mut ratios: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..5.0)).collect();
    ratios[0] = 1.0;
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
    let total: f64 = w.iter().sum();
    DerivedParams {
        ratios,
        coefficients: w.iter().map(|x| x / total).collect(),
        current_scales: vec![1.0; n],
    }
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let draws = 10_000;
    let (mut sum_err, mut term_err, mut res_err) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..draws {
        let n = rng.gen_range(2..=8);
        let d = random_derived(&mut rng, n);
        let inner: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let s: f64 = full_zvs_terms(&d, &inner)
            .iter()
            .zip(&d.coefficients)
            .map(|(t, l)| t * l)
            .sum();
        sum_err = sum_err.max(s.abs());
        let sol = online_solution(&d).map_err(|e| e.to_string())?;
        for t in full_zvs_terms(&d, &sol.inner_ratios) {
            term_err = term_err.max(t.abs());
        }
        for r in zvs_system_residual(&d, &sol.inner_ratios) {
            res_err = res_err.max(r.abs());
        }
    }
    check(
        sum_err <= 1e-12 && term_err <= 1e-12 && res_err <= 1e-12,
        format!(
            "{draws} draws, max |sum l T| {sum_err:.2e}, max |T| {term_err:.2e}, max residual {res_err:.2e}, {:.2} s",
            start.elapsed().as_secs_f64()
        ),
    )
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let r = run_campaign(3, 1000, (2, 6), None).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    check(
        r.worst.oracle <= 1e-9 && r.worst.edge <= 1e-9 && secs < 60.0,
        format!(
            "{} draws, max oracle error {:.2e} K, max edge error {:.2e} K, {secs:.2} s",
            r.draws, r.worst.oracle, r.worst.edge
        ),
    )
}

fn statuses(s: &Scenario, mode: Modulation, p4: f64) -> Result<Vec<ZvsStatus>, String> {
    let mut s = s.with_mode(mode);
    s.set_load(3, p4).map_err(|e| e.to_string())?;
    Ok(steady(&s).map_err(|e| e.to_string())?.report.statuses())
}

fn fmt_statuses(s: &[ZvsStatus]) -> String {
    s.iter().map(ZvsStatus::to_string).collect::<Vec<_>>().join("/")
}

fn criterion_4() -> Outcome {
    let g = golden("golden.json");
    let heavy_sps = statuses(&g, Modulation::Sps, 2000.0)?;
    let heavy_zvs = statuses(&g, Modulation::Zvs, 2000.0)?;
    let light_sps = statuses(&g, Modulation::Sps, 400.0)?;
    let light_zvs = statuses(&g, Modulation::Zvs, 400.0)?;
    let not_hard = |v: &[ZvsStatus]| v.iter().all(|s| *s != ZvsStatus::Hard);
    let heavy_sps_ok = heavy_sps[2] == ZvsStatus::Hard && heavy_sps[3] == ZvsStatus::Hard;
    let light_sps_ok = light_sps
        .iter()
        .enumerate()
        .all(|(i, s)| (*s == ZvsStatus::Zvs) == (i == 1));
    let ok = heavy_sps_ok && light_sps_ok && not_hard(&heavy_zvs) && not_hard(&light_zvs);

    let alt = golden("golden_l4_50uh.json");
    let alt_heavy = statuses(&alt, Modulation::Sps, 2000.0)?;
    let alt_light = statuses(&alt, Modulation::Sps, 400.0)?;
    check(
        ok,
        format!(
            "heavy SPS {} (want ports 3,4 HARD), heavy ZVS {}, light SPS {} (want only port 2 ZVS), light ZVS {}; \
             L4 = 50 uH variant: heavy SPS {}, light SPS {}",
            fmt_statuses(&heavy_sps),
            fmt_statuses(&heavy_zvs),
            fmt_statuses(&light_sps),
            fmt_statuses(&light_zvs),
            fmt_statuses(&alt_heavy),
            fmt_statuses(&alt_light)
        ),
    )
}

fn criterion_5() -> Outcome {
    let g = golden("golden.json");
    let mut heavy = g.clone();
    heavy.set_load(3, 2000.0).map_err(|e| e.to_string())?;
    let mut light = g;
    light.set_load(3, 400.0).map_err(|e| e.to_string())?;
    let h = compare(&heavy).map_err(|e| e.to_string())?;
    let l = compare(&light).map_err(|e| e.to_string())?;
    check(
        (0.45..=0.75).contains(&h.rms_ratio) && (0.25..=0.60).contains(&l.rms_ratio),
        format!(
            "heavy ratio {:.4} in [0.45, 0.75], light ratio {:.4} in [0.25, 0.60] (root-sum-square ratios {:.4}, {:.4})",
            h.rms_ratio, l.rms_ratio, h.total_rms_ratio, l.total_rms_ratio
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut details = vec![];
    let mut ok = true;
    for mode in [Modulation::Zvs, Modulation::Sps] {
        let s = golden("golden.json").with_mode(mode);
        let a = dynamic(&s).map_err(|e| e.to_string())?;
        let b = dynamic(&s).map_err(|e| e.to_string())?;
        ok &= a == b && a.events.len() == 2;
        for e in &a.events {
            let settled = e.settling_time.is_some_and(|t| t <= 5e-3);
            let band = e.max_voltage_deviation[1] <= 0.02 && e.max_voltage_deviation[2] <= 0.02;
            ok &= settled && band;
            details.push(format!(
                "{mode} step at {} s: settling {}, V_2 {:.3}%, V_3 {:.3}%",
                e.time,
                e.settling_time.map_or("none".into(), |t| format!("{:.2} ms", t * 1e3)),
                e.max_voltage_deviation[1] * 100.0,
                e.max_voltage_deviation[2] * 100.0
            ));
        }
    }
    check(ok, details.join("; "))
}

fn criterion_7() -> Outcome {
    let rows = sweep(&golden("golden.json")).map_err(|e| e.to_string())?;
    let mut ok = rows.len() == 20;
    let mut worst_margin = f64::INFINITY;
    let mut max_proxy = 0.0f64;
    for pair in rows.chunks(2) {
        let (sps, zvs) = (&pair[0], &pair[1]);
        ok &= sps.mode == Modulation::Sps && zvs.mode == Modulation::Zvs && sps.load == zvs.load;
        ok &= zvs.total_rms <= sps.total_rms && zvs.hard_switching_current == 0.0;
        worst_margin = worst_margin.min(sps.total_rms - zvs.total_rms);
        max_proxy = max_proxy.max(zvs.hard_switching_current);
    }
    check(
        ok,
        format!(
            "{} rows, min (SPS - ZVS) total RMS {worst_margin:.4} A, max ZVS hard-switching proxy {max_proxy} A",
            rows.len()
        ),
    )
}

fn criterion_8() -> Outcome {
    let r = run_campaign(8, 2000, (2, 8), None).map_err(|e| e.to_string())?;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut monotone = true;
    for _ in 0..2000 {
        let n = rng.gen_range(2..=8);
        let d = random_derived(&mut rng, n);
        let min = d.ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let (a, b) = (rng.gen_range(0.01..0.5) * min, rng.gen_range(0.5..1.0) * min);
        let lo = general_solution(&d.ratios, a).map_err(|e| e.to_string())?;
        let hi = general_solution(&d.ratios, b).map_err(|e| e.to_string())?;
        monotone &= lo.inner_ratios.iter().zip(&hi.inner_ratios).all(|(x, y)| x >= y);
    }

    let text = std::fs::read_to_string(scenario_path("golden.json")).unwrap();
    let mut equal: serde_json::Value = serde_json::from_str(&text).unwrap();
    // ports 2..4 moved onto the port-1 ratio
    equal["converter"]["ports"][1]["dc_voltage"] = 400.0.into();
    equal["converter"]["ports"][2]["dc_voltage"] = 200.0.into();
    equal["converter"]["ports"][3]["dc_voltage"] = 400.0.into();
    let s = Scenario::parse(&equal.to_string()).map_err(|e| e.to_string())?;
    let c = compare(&s).map_err(|e| e.to_string())?;
    let same_d = c
        .sps
        .report
        .shifts
        .outer
        .iter()
        .zip(&c.zvs.report.shifts.outer)
        .all(|(a, b)| (a - b).abs() <= 1e-12);
    let shifts = PhaseShiftSet::new(vec![0.0, 0.05, -0.02, 0.1], vec![0.0; 4]).unwrap();
    let zvs_d = online_duty_ratios(&s.config.setpoints(), &s.config.turns_ratios())
        .unwrap()
        .inner_ratios;
    let exact_same = zvs_d == shifts.inner;
    let mut idle_file = equal.clone();
    for i in 1..4 {
        idle_file["converter"]["ports"][i]["load"] = serde_json::json!({"kind": "constant_power", "value": 0.0});
    }
    idle_file["events"] = serde_json::json!([]);
    let idle = Scenario::parse(&idle_file.to_string()).map_err(|e| e.to_string())?;
    let run = |m| run_scenario(&idle.config, &idle.controllers, &[], &idle.with_mode(m).options);
    let series_same = run(Modulation::Sps).map_err(|e| e.to_string())?.voltages
        == run(Modulation::Zvs).map_err(|e| e.to_string())?.voltages;
    let degenerate = (c.rms_ratio - 1.0).abs() <= 1e-12 && same_d && exact_same && series_same;

    check(
        r.passed() && monotone && degenerate,
        format!(
            "campaign {} draws: antisymmetry {:.1e} K, mean {:.1e} K, min F {:.1e}, power balance {:.1e}; \
             lambda-monotone {monotone}; equal-M ratio {:.12}, equal-M series identical {series_same}",
            r.draws, r.worst.antisymmetry, r.worst.mean, r.worst.edge_offset_min, r.worst.power_balance, c.rms_ratio
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        ("1 online solution values", criterion_1),
        ("2 full-ZVS identities", criterion_2),
        ("3 oracle equivalence", criterion_3),
        ("4 ZVS classification", criterion_4),
        ("5 RMS reduction", criterion_5),
        ("6 load-step dynamics", criterion_6),
        ("7 sweep ordering", criterion_7),
        ("8 property suites", criterion_8),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match f() {
            Ok(d) => println!("PASS criterion {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {name}: {d}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
