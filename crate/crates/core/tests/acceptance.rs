//! The ten acceptance criteria, each reported on its own line.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use gaussmark::channel::{evolve_standard, InferOptions};
use gaussmark::markers::{
    discord, duan_necessary, fidelity, fidelity_cm, mutual_information, region_grid,
    unveil_by_local_squeezing, w_duan, w_epr, w_phs, EprDirection, Measured, RegionLabel,
};
use gaussmark::reconstruction::{bootstrap_markers, BootstrapOptions, TraceSet};
use gaussmark::{
    entropy_f, simulate_all, CovarianceMatrix4, LocalSymplectic, SimConfig, StandardFormCM,
    TwoModeGaussian,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const C_REF: f64 = 0.866_025_403_784_438_6;
const WITNESS_ZERO: f64 = 1e-9;

type Outcome = Result<String, String>;

fn reference() -> StandardFormCM {
    StandardFormCM::new(1.0, 1.0, C_REF, -C_REF).unwrap()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_time(start: Instant, limit: Duration) -> Result<(), String> {
    let el = start.elapsed();
    ensure(el < limit, || format!("took {el:?}, limit {limit:?}"))
}

fn n_grid() -> Vec<f64> {
    (0..=90).map(|k| 0.5 + 0.05 * k as f64).collect()
}

fn random_physical(rng: &mut ChaCha8Rng) -> StandardFormCM {
    loop {
        let n = rng.random_range(0.5..4.0);
        let m = rng.random_range(0.5..4.0);
        let k = f64::sqrt(n * m);
        let c1 = rng.random_range(-1.0..1.0) * k;
        let c2 = rng.random_range(-1.0..1.0) * k;
        let s = StandardFormCM::new(n, m, c1, c2).unwrap();
        if s.is_physical() {
            return s;
        }
    }
}

fn loss_grid() -> Vec<f64> {
    (1..=999).rev().map(|k| k as f64 / 1000.0).collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let v = StandardFormCM::vacuum();
    let values = [
        ("w_phs", w_phs(&v), 0.0),
        ("w_duan", w_duan(&v), 0.0),
        ("w_epr 1->2", w_epr(&v, EprDirection::OneToTwo), 0.0),
        ("w_epr 2->1", w_epr(&v, EprDirection::TwoToOne), 0.0),
        ("F", fidelity(&v).map_err(|e| e.to_string())?, 0.5),
    ];
    for (name, got, want) in values {
        ensure((got - want).abs() <= 1e-12, || format!("{name} = {got}"))?;
    }
    within_time(start, Duration::from_secs(1))?;
    Ok(format!("vacuum markers exact in {:?}", start.elapsed()))
}

fn criterion_2() -> Outcome {
    let e = |r: gaussmark::Result<f64>| r.map_err(|e| e.to_string());
    let mut worst: f64 = 0.0;
    for n in n_grid() {
        let s = StandardFormCM::pure_diagonal(n).map_err(|e| e.to_string())?;
        let f = e(entropy_f(n))?;
        let checks = [
            ("mu", e(s.purity())?, 1.0),
            ("S", e(s.von_neumann_entropy())?, 0.0),
            ("D(meas 2)", e(discord(&s, Measured::Two))?, f),
            ("D(meas 1)", e(discord(&s, Measured::One))?, f),
            ("I", e(mutual_information(&s))?, 2.0 * f),
        ];
        for (name, got, want) in checks {
            let d = (got - want).abs();
            worst = worst.max(d);
            ensure(d <= 1e-9, || format!("n={n}: {name} = {got}, expected {want}"))?;
        }
    }
    Ok(format!("91 pure states, worst deviation {worst:.2e}"))
}

fn criterion_3() -> Outcome {
    let e = |r: gaussmark::Result<StandardFormCM>| r.map_err(|e| e.to_string());
    let mut checked = 0;
    for n in n_grid() {
        let s = e(StandardFormCM::pure_diagonal(n))?;
        for dir in [EprDirection::OneToTwo, EprDirection::TwoToOne] {
            let at = |t: f64| -> Result<f64, String> { Ok(w_epr(&e(evolve_standard(&s, t))?, dir)) };
            let half = at(0.5)?;
            ensure(half.abs() <= 1e-10, || format!("n={n}: w_epr(T=0.5) = {half}"))?;
            // The vacuum has no correlations to lose.
            if n > 0.5 {
                let below = at(0.49)?;
                let above = at(0.51)?;
                ensure(below > 0.0, || format!("n={n}: w_epr(T=0.49) = {below}"))?;
                ensure(above < 0.0, || format!("n={n}: w_epr(T=0.51) = {above}"))?;
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} state/direction pairs, sign change at T=1/2"))
}

struct PersistenceCount {
    states: usize,
    phs_lost: usize,
    duan_lost: usize,
    fidelity_lost: usize,
}

fn persistence<F: FnMut(&mut ChaCha8Rng) -> StandardFormCM>(
    seed: u64,
    mut draw: F,
) -> Result<PersistenceCount, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = loss_grid();
    let mut c = PersistenceCount {
        states: 0,
        phs_lost: 0,
        duan_lost: 0,
        fidelity_lost: 0,
    };
    while c.states < 1000 {
        let s = draw(&mut rng);
        if !(w_phs(&s) < -WITNESS_ZERO) {
            continue;
        }
        c.states += 1;
        let duan0 = w_duan(&s) < 0.0;
        let fid0 = fidelity(&s).map_err(|e| e.to_string())? > 0.5;
        let (mut phs_ok, mut duan_ok, mut fid_ok) = (true, true, true);
        for &t in &grid {
            let e = evolve_standard(&s, t).map_err(|e| e.to_string())?;
            phs_ok &= w_phs(&e) < 0.0;
            duan_ok &= !duan0 || w_duan(&e) < 0.0;
            fid_ok &= !fid0 || fidelity(&e).map_err(|e| e.to_string())? > 0.5;
        }
        c.phs_lost += usize::from(!phs_ok);
        c.duan_lost += usize::from(!duan_ok);
        c.fidelity_lost += usize::from(!fid_ok);
    }
    Ok(c)
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let general = persistence(4, random_physical)?;
    let twin = persistence(40, |rng| loop {
        let n = rng.random_range(0.5..4.0);
        let m = rng.random_range(0.5..4.0);
        let c = rng.random_range(0.0..1.0) * f64::sqrt(n * m);
        let s = StandardFormCM::new(n, m, c, -c).unwrap();
        if s.is_physical() {
            return s;
        }
    })?;
    println!(
        "    info: c1 = -c2 class: {} states, lost PHS {}, Duan {}, F>1/2 {}",
        twin.states, twin.phs_lost, twin.duan_lost, twin.fidelity_lost
    );
    within_time(start, Duration::from_secs(30))?;
    let summary = format!(
        "{} random entangled states x {} transmissions: lost PHS {}, Duan {}, F>1/2 {}",
        general.states,
        loss_grid().len(),
        general.phs_lost,
        general.duan_lost,
        general.fidelity_lost
    );
    ensure(
        general.phs_lost == 0 && general.duan_lost == 0 && general.fidelity_lost == 0,
        || summary.clone(),
    )?;
    Ok(summary)
}

fn criterion_5() -> Outcome {
    let step = 1e-3;
    let grid: Vec<f64> = (1..1000).map(|k| k as f64 * step).collect();
    let mut report = Vec::new();
    for n in [0.75, 1.0, 1.5, 2.0, 3.0, 5.0] {
        let s = StandardFormCM::pure_diagonal(n).map_err(|e| e.to_string())?;
        let mut best = (f64::INFINITY, 0.0);
        for &t in &grid {
            let mu = evolve_standard(&s, t)
                .and_then(|e| e.purity())
                .map_err(|e| e.to_string())?;
            if mu < best.0 {
                best = (mu, t);
            }
        }
        ensure((best.1 - 0.5).abs() <= step + 1e-12, || {
            format!("n={n}: purity minimum at T={}", best.1)
        })?;
        report.push(format!("n={n}: T={:.3}", best.1));
    }
    Ok(format!("argmin {}", report.join(", ")))
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut duan_bad, mut epr_bad, mut nec_bad, mut canonical) = (0, 0, 0, 0);
    for _ in 0..10_000 {
        let s = random_physical(&mut rng);
        let phs = w_phs(&s);
        if w_duan(&s) < 0.0 && !(phs < 0.0) {
            duan_bad += 1;
        }
        let epr = w_epr(&s, EprDirection::OneToTwo).min(w_epr(&s, EprDirection::TwoToOne));
        if epr < 0.0 && !(phs < 0.0) {
            epr_bad += 1;
        }
        if phs.abs() > WITNESS_ZERO {
            canonical += 1;
            let agrees = unveil_by_local_squeezing(&s)
                .and_then(|(d, _)| duan_necessary(&d))
                .map(|w| (w < 0.0) == (phs < 0.0))
                .unwrap_or(false);
            nec_bad += usize::from(!agrees);
        }
    }
    let summary = format!(
        "10000 states: Duan=>PHS violations {duan_bad}, EPR=>PHS violations {epr_bad}, \
         canonical Duan vs PHS disagreements {nec_bad}/{canonical}"
    );
    ensure(duan_bad == 0 && epr_bad == 0 && nec_bad == 0, || summary.clone())?;
    Ok(summary)
}

fn random_local_symplectic(rng: &mut ChaCha8Rng) -> LocalSymplectic {
    let angle = |rng: &mut ChaCha8Rng| rng.random_range(0.0..std::f64::consts::TAU);
    let squeeze = |rng: &mut ChaCha8Rng| f64::exp(rng.random_range(-1.0..1.0));
    LocalSymplectic::rotation(angle(rng), angle(rng))
        .compose(&LocalSymplectic::squeezing(squeeze(rng), squeeze(rng)).unwrap())
        .compose(&LocalSymplectic::rotation(angle(rng), angle(rng)))
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut worst_phs, mut worst_mu, mut max_df): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut fid_changes = 0;
    for _ in 0..1000 {
        let s = random_physical(&mut rng);
        let cm = s.covariance();
        let moved: CovarianceMatrix4 = cm.apply_local_symplectic(&random_local_symplectic(&mut rng));
        let back = moved.standard_form().map_err(|e| e.to_string())?;
        worst_phs = worst_phs.max((w_phs(&back) - w_phs(&s)).abs());
        let mu0 = s.purity().map_err(|e| e.to_string())?;
        let mu1 = moved.purity().map_err(|e| e.to_string())?;
        worst_mu = worst_mu.max((mu1 - mu0).abs());
        let f0 = fidelity_cm(&cm).map_err(|e| e.to_string())?;
        let f1 = fidelity_cm(&moved).map_err(|e| e.to_string())?;
        let df = (f1 - f0).abs();
        max_df = max_df.max(df);
        fid_changes += usize::from(df > 1e-3);
    }
    let summary = format!(
        "1000 transforms: max |dw_phs| {worst_phs:.1e}, max |dmu| {worst_mu:.1e}, \
         F changed by >1e-3 in {fid_changes} cases (max {max_df:.3})"
    );
    ensure(worst_phs <= 1e-9 && worst_mu <= 1e-9 && fid_changes > 0, || summary.clone())?;
    Ok(summary)
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let cfg = SimConfig::ideal(100_000, 8);
    let set = TraceSet::new(simulate_all(&reference(), &cfg).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let report = bootstrap_markers(&set, &BootstrapOptions::default()).map_err(|e| e.to_string())?;
    let truth = reference().covariance();
    let mut worst: f64 = 0.0;
    for i in 0..4 {
        for j in i..4 {
            let d = (report.reconstruction.cm.matrix()[(i, j)] - truth.matrix()[(i, j)]).abs();
            let sd = report.cm_sd[i][j];
            worst = worst.max(d / sd);
            ensure(d <= 3.0 * sd, || format!("element ({i},{j}) off by {d:.4}, bootstrap SD {sd:.4}"))?;
        }
    }
    let sd_c1 = report.field("c1").ok_or("no c1 field")?.sd;
    ensure(sd_c1 <= 0.02, || format!("SD(c1) = {sd_c1}"))?;
    within_time(start, Duration::from_secs(60))?;
    Ok(format!(
        "worst element deviation {worst:.2} SD, SD(c1) = {sd_c1:.4}, {:?}",
        start.elapsed()
    ))
}

fn criterion_9() -> Outcome {
    let mut lines = Vec::new();
    for (t, samples) in [(0.63, 100_000), (0.3, 100_000), (0.1, 100_000), (0.01, 1_000_000)] {
        let state = evolve_standard(&reference(), t).map_err(|e| e.to_string())?;
        let cfg = SimConfig::ideal(samples, 9);
        let set = TraceSet::new(simulate_all(&state, &cfg).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        let opts = BootstrapOptions {
            resamples: 100,
            seed: 9,
            infer: Some(InferOptions::for_measured_data()),
            ..BootstrapOptions::default()
        };
        let report = bootstrap_markers(&set, &opts).map_err(|e| e.to_string())?;
        let est = report.transmission.clone().ok_or("no transmission estimate")?;
        ensure(est.point.is_finite(), || format!("T={t}: inference failed"))?;
        ensure((est.point - t).abs() <= 3.0 * est.sd, || {
            format!("T={t}: recovered {:.4} +/- {:.4}", est.point, est.sd)
        })?;
        lines.push(format!("T={t}: {:.4}+/-{:.4}", est.point, est.sd));
        if t == 0.01 {
            let photons = report.field("mean_photon_number").ok_or("no photon number")?;
            ensure((photons.point - 0.005).abs() <= 3.0 * photons.sd, || {
                format!("mean photon number {:.5} +/- {:.5}", photons.point, photons.sd)
            })?;
            lines.push(format!("<n>={:.4}+/-{:.4}", photons.point, photons.sd));
        }
    }
    Ok(lines.join(", "))
}

fn criterion_10() -> Outcome {
    let start = Instant::now();
    let res = 201;
    let grid = region_grid(1.0, res).map_err(|e| e.to_string())?;
    let at = |i: usize, j: usize| grid[j * res + i].label;
    let last = res - 1;
    ensure(at(last, 0) == RegionLabel::I, || format!("corner (1,-1) is {}", at(last, 0)))?;
    ensure(at(100, 100) == RegionLabel::V, || format!("origin is {}", at(100, 100)))?;
    ensure(at(0, 0) == RegionLabel::VI && at(last, last) == RegionLabel::VI, || {
        "equal unit correlations are not unphysical".into()
    })?;

    // Witness sets: EPR inside Duan inside PHS, each strictly, over the
    // quadrant that holds the diagonal. The Duan witness pairs c1 - c2, so
    // the mirrored quadrant is only reached after a local rotation by π.
    let cmax = StandardFormCM::pure_diagonal(1.0).map_err(|e| e.to_string())?.c1();
    let (mut epr, mut duan, mut phs, mut broken) = (0usize, 0usize, 0usize, 0usize);
    for cell in &grid {
        if cell.label == RegionLabel::VI || cell.c1_tilde < 0.0 || cell.c2_tilde > 0.0 {
            continue;
        }
        let s = StandardFormCM::new(1.0, 1.0, cell.c1_tilde * cmax, cell.c2_tilde * cmax)
            .map_err(|e| e.to_string())?;
        let e = w_epr(&s, EprDirection::OneToTwo) < -WITNESS_ZERO;
        let d = w_duan(&s) < -WITNESS_ZERO;
        let p = w_phs(&s) < -WITNESS_ZERO;
        broken += usize::from((e && !d) || (d && !p));
        epr += usize::from(e);
        duan += usize::from(d);
        phs += usize::from(p);
    }
    ensure(broken == 0 && epr < duan && duan < phs, || {
        format!("set sizes EPR {epr}, Duan {duan}, PHS {phs}, nesting violations {broken}")
    })?;

    // Along the diagonal from the corner: I, then II, then the weaker regions.
    let diag: Vec<RegionLabel> = (0..=100).map(|k| at(last - k, k)).collect();
    ensure(diag.windows(2).all(|w| w[0] <= w[1]), || format!("diagonal not ordered: {diag:?}"))?;
    ensure(diag.contains(&RegionLabel::II), || "no region II on the diagonal".into())?;
    within_time(start, Duration::from_secs(10))?;
    let count = |l: RegionLabel| grid.iter().filter(|c| c.label == l).count();
    Ok(format!(
        "I {} II {} III {} IV {} V {} VI {} in {:?}",
        count(RegionLabel::I),
        count(RegionLabel::II),
        count(RegionLabel::III),
        count(RegionLabel::IV),
        count(RegionLabel::V),
        count(RegionLabel::VI),
        start.elapsed()
    ))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("boundary exactness", criterion_1),
        ("pure-state identities", criterion_2),
        ("EPR half-loss law", criterion_3),
        ("robustness persistence", criterion_4),
        ("purity minimum at T=1/2", criterion_5),
        ("witness consistency", criterion_6),
        ("symplectic invariance", criterion_7),
        ("reconstruction round trip", criterion_8),
        ("transmission inference", criterion_9),
        ("region plot topology", criterion_10),
    ];
    let mut failed = Vec::new();
    for (k, (name, run)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|p| Err(format!("panicked: {:?}", p.downcast_ref::<String>())));
        match outcome {
            Ok(msg) => println!("[PASS] criterion {} {name}: {msg}", k + 1),
            Err(msg) => {
                println!("[FAIL] criterion {} {name}: {msg}", k + 1);
                failed.push(k + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
