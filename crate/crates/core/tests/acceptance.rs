//! Acceptance suite. Every criterion prints one `PASS` or `FAIL` line on
//! stdout (bypassing the test harness capture) and fails its test when the
//! criterion is not met.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mvhmm::dual::{dw_log_survival, dw_log_typed, gillespie_oracle, DualKind, DwDualSpec, FvDual};
use mvhmm::dw::DwEngine;
use mvhmm::fv::FvEngine;
use mvhmm::mc::run_blocks;
use mvhmm::model::{BaseMeasure, Components, DirichletMixtureLaw, GammaMixtureLaw, MultiIndex, ObservationTimeline, TypeRegistry};
use mvhmm::oracle::{
    cir_duality_reports, dw_propagate_by_lattice, fv_propagate_by_lattice, particle_smoother_dw, particle_smoother_fv,
    wf_duality_reports, OracleReport,
};
use mvhmm::urn::NextDrawPmf;

fn verdict(id: u32, title: &str, pass: bool, detail: &str, started: Instant) {
    let line = format!(
        "{} criterion {id:2} {title}: {detail} ({:.2}s)\n",
        if pass { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
    assert!(pass, "criterion {id} failed: {detail}");
}

fn mi(c: &[u32]) -> MultiIndex {
    MultiIndex::new(c.to_vec())
}

fn labels(k: usize) -> Vec<String> {
    (0..k).map(|j| format!("y{j}")).collect()
}

fn registry(k: usize) -> TypeRegistry {
    TypeRegistry::new(labels(k)).unwrap()
}

fn discrete_base(theta: f64, probs: &[f64]) -> BaseMeasure {
    let atoms: BTreeMap<String, f64> = labels(probs.len()).into_iter().zip(probs.iter().copied()).collect();
    BaseMeasure::discrete(theta, atoms).unwrap()
}

/// Randomized dataset: `K ≤ 3` types, at most four times, at most eight
/// observations in total, one or two draws per time.
struct RandomCase {
    theta: f64,
    beta: f64,
    base: BaseMeasure,
    timeline: ObservationTimeline,
    dim: usize,
}

fn random_case(rng: &mut ChaCha8Rng, nonatomic: bool) -> RandomCase {
    let dim = rng.random_range(1..=3usize);
    let times_n = rng.random_range(1..=4usize);
    let theta = rng.random_range(0.3..4.0);
    let beta = rng.random_range(0.3..3.0);
    let mut budget = rng.random_range(0..=8u32);
    let mut t = rng.random_range(0.0..1.0);
    let mut times = Vec::new();
    let mut groups = Vec::new();
    for _ in 0..times_n {
        times.push(t);
        t += rng.random_range(0.05..2.0);
        let draws = rng.random_range(1..=2usize);
        let mut group = Vec::new();
        for _ in 0..draws {
            let mut counts = vec![0u32; dim];
            let take = rng.random_range(0..=budget.min(4));
            for _ in 0..take {
                counts[rng.random_range(0..dim)] += 1;
            }
            budget -= take;
            group.push(MultiIndex::new(counts));
        }
        groups.push(group);
    }
    let base = if nonatomic {
        BaseMeasure::nonatomic(theta).unwrap()
    } else {
        let raw: Vec<f64> = (0..dim).map(|_| rng.random_range(0.1..1.0)).collect();
        let scale = if rng.random_bool(0.5) { 1.0 } else { 0.8 };
        let total: f64 = raw.iter().sum();
        discrete_base(theta, &raw.iter().map(|r| scale * r / total).collect::<Vec<_>>())
    };
    RandomCase {
        theta,
        beta,
        base,
        timeline: ObservationTimeline::new(times, groups, dim).unwrap(),
        dim,
    }
}

fn random_suite() -> Vec<RandomCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_501);
    (0..200).map(|c| random_case(&mut rng, c % 2 == 1)).collect()
}

fn weight_error(comps: &Components) -> f64 {
    (comps.weight_sum() - 1.0).abs()
}

fn pmf_error(pmf: &NextDrawPmf) -> f64 {
    (pmf.total() - 1.0).abs()
}

#[test]
fn criterion_01_single_lineage_survival() {
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    for theta in [0.5, 1.0, 2.0, 5.0] {
        let dual = FvDual::new(theta);
        for t in [0.01, 0.1, 1.0, 10.0] {
            let p11 = dual.totals(1, t).unwrap()[1];
            worst = worst.max((p11 - (-theta * t / 2.0).exp()).abs());
        }
    }
    let pass = worst <= 1e-8 && started.elapsed().as_secs_f64() < 1.0;
    verdict(1, "p11(t) = exp(-theta t/2)", pass, &format!("max abs error {worst:.2e}"), started);
}

#[test]
fn criterion_02_normalization() {
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    let mut mixtures = 0usize;
    for case in random_suite() {
        let tl = &case.timeline;
        let fv = FvEngine::new(&case.base, registry(case.dim)).unwrap();
        let dw = DwEngine::new(&case.base, case.beta, registry(case.dim)).unwrap();
        for i in 0..tl.len() {
            for law in [fv.filter_forward(tl, i), fv.filter(tl, i), fv.filter_backward(tl, i), fv.smooth(tl, i)] {
                let law = law.unwrap();
                worst = worst.max(weight_error(&law.components));
                mixtures += 1;
            }
            let smoothed = fv.smooth(tl, i).unwrap();
            worst = worst.max(pmf_error(&fv.predictive_pmf::<&str>(&smoothed, &[])));
            worst = worst.max(pmf_error(&fv.predictive_pmf(&smoothed, &["y0", "<other>"])));

            for law in [dw.filter_forward(tl, i), dw.filter(tl, i), dw.filter_backward(tl, i), dw.smooth(tl, i)] {
                let law = law.unwrap();
                worst = worst.max(weight_error(&law.components));
                mixtures += 1;
            }
            let smoothed = dw.smooth(tl, i).unwrap();
            let counts = dw.predict_count_pmf(&smoothed).unwrap();
            worst = worst.max((counts.probs.iter().sum::<f64>() - 1.0).abs());
            worst = worst.max(pmf_error(&dw.first_label_pmf(&smoothed).unwrap()));
            worst = worst.max(pmf_error(&dw.label_pmf(&smoothed, 3, &["y0"]).unwrap()));
            mixtures += 5;
        }
    }
    let pass = worst <= 1e-10 && started.elapsed().as_secs_f64() < 60.0;
    verdict(
        2,
        "normalization on 200 random datasets",
        pass,
        &format!("{mixtures} laws, max |sum - 1| = {worst:.2e}"),
        started,
    );
}

fn max_weight_gap(a: &Components, b: &Components) -> f64 {
    let mut keys: Vec<&MultiIndex> = a.iter().map(|c| &c.index).collect();
    keys.extend(b.iter().map(|c| &c.index));
    keys.iter()
        .map(|k| (a.log_weight_of(k).exp() - b.log_weight_of(k).exp()).abs())
        .fold(0.0, f64::max)
}

#[test]
fn criterion_03_forward_backward_against_lattice() {
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    let mut checks = 0usize;
    for case in random_suite() {
        let tl = &case.timeline;
        let fv = FvEngine::new(&case.base, registry(case.dim)).unwrap();
        let dw = DwEngine::new(&case.base, case.beta, registry(case.dim)).unwrap();
        for i in 1..tl.len() {
            let dt = tl.time(i) - tl.time(i - 1);
            // Forward: filtered law at t_{i-1} moved to t_i.
            let via_dual = fv.filter_forward(tl, i).unwrap();
            let via_lattice = fv_propagate_by_lattice(case.theta, &fv.filter(tl, i - 1).unwrap(), dt).unwrap();
            worst = worst.max(max_weight_gap(&via_dual.components, &via_lattice.components));
            // Backward: law given the future at t_i moved to t_{i-1}.
            let future = fv.update(&fv.filter_backward(tl, i).unwrap(), tl.counts(i)).unwrap();
            let via_dual = fv.filter_backward(tl, i - 1).unwrap();
            let via_lattice = fv_propagate_by_lattice(case.theta, &future, dt).unwrap();
            worst = worst.max(max_weight_gap(&via_dual.components, &via_lattice.components));

            let via_dual = dw.filter_forward(tl, i).unwrap();
            let via_lattice = dw_propagate_by_lattice(&dw, &dw.filter(tl, i - 1).unwrap(), dt).unwrap();
            worst = worst.max(max_weight_gap(&via_dual.components, &via_lattice.components));
            worst = worst.max((via_dual.rate_offset - via_lattice.rate_offset).abs());
            let future = dw.update(&dw.filter_backward(tl, i).unwrap(), tl.draws(i)).unwrap();
            let via_dual = dw.filter_backward(tl, i - 1).unwrap();
            let via_lattice = dw_propagate_by_lattice(&dw, &future, dt).unwrap();
            worst = worst.max(max_weight_gap(&via_dual.components, &via_lattice.components));
            worst = worst.max((via_dual.rate_offset - via_lattice.rate_offset).abs());
            checks += 4;
        }
    }
    let pass = worst <= 1e-10;
    verdict(
        3,
        "forward and backward propagation match lattice ODE",
        pass,
        &format!("{checks} propagations, max weight gap {worst:.2e}"),
        started,
    );
}

fn count_bound(tl: &ObservationTimeline, i: usize) -> u64 {
    let past = tl.total_counts(0..i);
    let future = tl.total_counts(i + 1..tl.len());
    past.counts()
        .iter()
        .zip(future.counts())
        .map(|(&a, &b)| (1 + a as u64) * (1 + b as u64))
        .product()
}

#[test]
fn criterion_04_component_count() {
    let started = Instant::now();
    let mut detail = Vec::new();
    let mut pass = true;

    // Discrete base: every pair carries positive weight.
    let base = discrete_base(1.7, &[0.2, 0.5, 0.3]);
    let tl = ObservationTimeline::from_counts(
        vec![0.0, 0.3, 0.9, 1.4, 2.0],
        vec![mi(&[1, 2, 0]), mi(&[0, 1, 1]), mi(&[2, 0, 1]), mi(&[1, 1, 0]), mi(&[0, 0, 2])],
    )
    .unwrap();
    let fv = FvEngine::new(&base, registry(3)).unwrap();
    for i in 0..tl.len() {
        let pairs = fv.smoothing_pairs(&tl, i).unwrap();
        let bound = count_bound(&tl, i);
        pass &= pairs.len() as u64 == bound;
        detail.push(format!("t{i} {}={bound}", pairs.len()));
    }

    // Nonatomic base, nothing shared between the first two times.
    let base = BaseMeasure::nonatomic(1.7).unwrap();
    let tl = ObservationTimeline::from_counts(
        vec![0.0, 0.5, 1.2],
        vec![mi(&[2, 1, 0, 0]), mi(&[0, 0, 1, 0]), mi(&[0, 0, 2, 1])],
    )
    .unwrap();
    let fv = FvEngine::new(&base, registry(4)).unwrap();
    let pairs = fv.smoothing_pairs(&tl, 1).unwrap();
    let bound = count_bound(&tl, 1);
    pass &= (pairs.len() as u64) < bound;
    detail.push(format!("nonatomic {}<{bound}", pairs.len()));
    pass &= started.elapsed().as_secs_f64() < 10.0;
    verdict(4, "smoothing component count", pass, &detail.join(" "), started);
}

#[test]
fn criterion_05_shared_atom_support() {
    let started = Instant::now();
    let base = BaseMeasure::nonatomic(1.3).unwrap();
    let fv = FvEngine::new(&base, registry(3)).unwrap();
    let (n_past, n_now, n_future) = (mi(&[1, 3, 0]), mi(&[0, 0, 1]), mi(&[0, 2, 1]));
    // The worked set: i ≤ (1,3,0), j ≤ (0,2,1), i_2 > 0, j_2 > 0, j_3 > 0.
    let in_set = |i: &MultiIndex, j: &MultiIndex| {
        i.le(&n_past) && j.le(&n_future) && i.get(1) > 0 && j.get(1) > 0 && j.get(2) > 0
    };
    let mut pass = true;
    let mut positives = 0;
    for (dt_past, dt_future) in [(0.3, 0.7), (1.0, 1.0), (0.05, 2.5)] {
        let pairs = fv
            .one_step_smoothing_weights(&n_past, &n_now, &n_future, dt_past, dt_future)
            .unwrap();
        for ((i, j), lw) in &pairs {
            if lw.exp() > 0.0 {
                positives += 1;
                pass &= in_set(i, j);
            }
        }
    }
    let tl = ObservationTimeline::from_counts(vec![0.0, 0.4, 1.1], vec![n_past.clone(), n_now.clone(), n_future.clone()]).unwrap();
    for ((i, j), lw) in &fv.smoothing_pairs(&tl, 1).unwrap() {
        if lw.exp() > 0.0 {
            positives += 1;
            pass &= in_set(i, j);
        }
    }
    pass &= positives > 0;
    verdict(
        5,
        "positive smoothing pairs lie in the shared-atom set",
        pass,
        &format!("{positives} positive pairs checked"),
        started,
    );
}

fn multi_indices_up_to(dim: usize, max_total: u32) -> Vec<MultiIndex> {
    let top = MultiIndex::new(vec![max_total; dim]);
    top.below().filter(|m| m.total() <= max_total as u64).collect()
}

fn summarize(reports: &[OracleReport]) -> (bool, String) {
    let pass = reports.iter().all(|r| r.pass);
    let worst = reports
        .iter()
        .filter(|r| r.std_error > 0.0)
        .map(|r| r.z_score.abs())
        .fold(0.0, f64::max);
    (pass, format!("{} checks, max |z| {worst:.2}", reports.len()))
}

#[test]
fn criterion_06_duality_identities() {
    let started = Instant::now();
    let mut reports = Vec::new();
    let ms2 = multi_indices_up_to(2, 3);
    let ms1 = multi_indices_up_to(1, 3);
    reports.extend(wf_duality_reports(&[1.2, 0.8], &[0.3, 0.7], 0.5, &ms2, 100_000, 61).unwrap());
    reports.extend(wf_duality_reports(&[0.6, 1.9], &[0.55, 0.45], 1.3, &ms2, 100_000, 62).unwrap());
    let spec = DwDualSpec::new(2.0, 1.0, 1.0);
    reports.extend(cir_duality_reports(&[1.2, 0.8], spec, &[0.8, 1.5], 0.7, &ms2, 100_000, 63).unwrap());
    let spec = DwDualSpec::new(1.5, 2.5, 0.0);
    reports.extend(cir_duality_reports(&[1.5], spec, &[0.4], 0.3, &ms1, 100_000, 64).unwrap());
    let spec = DwDualSpec::new(0.7, 0.6, 2.0);
    reports.extend(cir_duality_reports(&[0.7], spec, &[2.0], 1.1, &ms1, 100_000, 65).unwrap());
    for r in reports.iter().filter(|r| !r.pass) {
        println!("{r}");
    }
    let (pass, detail) = summarize(&reports);
    verdict(6, "WF and CIR duality by Monte Carlo", pass && started.elapsed().as_secs_f64() < 300.0, &detail, started);
}

/// Gillespie paths of the Dawson-Watanabe dual against binomial thinning.
fn thinning_reports(spec: DwDualSpec, start: &MultiIndex, t: f64, replicates: u64, seed: u64) -> Vec<OracleReport> {
    let law = gillespie_oracle(DualKind::Dw(spec), start, t, replicates, seed);
    let log_q = dw_log_survival(&spec, t).unwrap();
    start
        .below()
        .map(|k| {
            let exact = dw_log_typed(start, &k, log_q).unwrap().exp();
            OracleReport::new(format!("thinning {start}->{k}"), exact, law.prob(&k), law.std_error(&k), 0.0)
        })
        .collect()
}

/// Full-retention weight after a tiny step from a conjugate posterior.
fn retention(rate_scale: f64) -> f64 {
    let base = BaseMeasure::nonatomic(2.0).unwrap();
    let engine = DwEngine::with_options(&base, 1.5, registry(2), rate_scale, 0.0).unwrap();
    let post = engine.update(&engine.prior(), &[mi(&[2, 1]), mi(&[0, 2])]).unwrap();
    let moved = engine.propagate(&post, 1e-6).unwrap();
    moved.components.log_weight_of(&mi(&[2, 3])).exp()
}

#[test]
fn criterion_07_dual_rate_calibration() {
    let started = Instant::now();
    let start = mi(&[2, 1]);
    let ms = multi_indices_up_to(2, 3);
    let mut selected = None;
    let mut notes = Vec::new();
    for kappa in [2.0, 1.0, 0.5] {
        let spec = DwDualSpec::new(1.4, 1.1, 1.5).with_rate_scale(kappa);
        let thinning = thinning_reports(spec, &start, 0.6, 1_000_000, 71);
        let thinning_ok = thinning.iter().all(|r| r.pass);
        let keep = retention(kappa);
        let duality = cir_duality_reports(&[0.9, 0.5], spec, &[0.8, 1.5], 0.7, &ms, 100_000, 72).unwrap();
        let duality_ok = duality.iter().all(|r| r.pass);
        notes.push(format!(
            "kappa={kappa}: thinning {} retention {:.8} duality {}",
            if thinning_ok { "ok" } else { "fail" },
            keep,
            if duality_ok { "ok" } else { "fail" }
        ));
        if thinning_ok && keep > 1.0 - 1e-4 && duality_ok {
            selected = Some(kappa);
            break;
        }
    }
    let default_scale = mvhmm::dual::DW_RATE_SCALE;
    let pass = selected == Some(default_scale) && started.elapsed().as_secs_f64() < 300.0;
    notes.push(format!("selected {selected:?}, engine default {default_scale}"));
    verdict(7, "DW dual rate calibration", pass, &notes.join("; "), started);
}

#[test]
fn criterion_08_particle_smoother() {
    let started = Instant::now();
    let times = vec![0.0, 0.4, 1.0];
    let alpha = [0.9, 1.4];
    let theta: f64 = alpha.iter().sum();
    let base = discrete_base(theta, &[alpha[0] / theta, alpha[1] / theta]);
    let mut reports = Vec::new();

    let counts = vec![mi(&[2, 1]), mi(&[0, 2]), mi(&[1, 1])];
    let tl = ObservationTimeline::from_counts(times.clone(), counts).unwrap();
    let fv = FvEngine::new(&base, registry(2)).unwrap();
    for i in 0..3 {
        let exact = fv.smooth(&tl, i).unwrap().mean(fv.params());
        let est = particle_smoother_fv(&alpha, &tl, i, 100_000, 80 + i as u64).unwrap();
        reports.push(OracleReport::new(format!("fv t{i}"), exact[0], est[0].mean, est[0].std_error, 0.0));
    }

    let beta = 1.3;
    let draws = vec![vec![mi(&[2, 1])], vec![mi(&[0, 2]), mi(&[1, 0])], vec![mi(&[1, 1])]];
    let tl = ObservationTimeline::new(times, draws, 2).unwrap();
    let dw = DwEngine::new(&base, beta, registry(2)).unwrap();
    for i in 0..3 {
        let exact = dw.smooth(&tl, i).unwrap().mean(dw.params());
        let est = particle_smoother_dw(&alpha, beta, &tl, i, 100_000, 90 + i as u64).unwrap();
        for j in 0..2 {
            reports.push(OracleReport::new(format!("dw t{i} y{j}"), exact[j], est[j].mean, est[j].std_error, 0.0));
        }
    }
    for r in reports.iter().filter(|r| !r.pass) {
        println!("{r}");
    }
    let (pass, detail) = summarize(&reports);
    verdict(8, "smoothing means against particle smoother", pass && started.elapsed().as_secs_f64() < 600.0, &detail, started);
}

/// Empirical frequencies of labels over blocks of draws.
fn tally<F>(replicates: usize, seed: u64, draw: F) -> (BTreeMap<String, u64>, u64)
where
    F: Fn(&mut ChaCha8Rng) -> Option<String> + Sync,
{
    let blocks = run_blocks(replicates, seed, |rng, len| {
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        let mut used = 0u64;
        for _ in 0..len {
            if let Some(label) = draw(rng) {
                *counts.entry(label).or_insert(0) += 1;
                used += 1;
            }
        }
        (counts, used)
    });
    let mut counts = BTreeMap::new();
    let mut used = 0;
    for (block, n) in blocks {
        used += n;
        for (k, c) in block {
            *counts.entry(k).or_insert(0) += c;
        }
    }
    (counts, used)
}

fn frequency_reports(name: &str, pmf: &[(String, f64)], counts: &BTreeMap<String, u64>, total: u64) -> Vec<OracleReport> {
    let n = total as f64;
    let mut reports: Vec<OracleReport> = pmf
        .iter()
        .map(|(label, p)| {
            let freq = *counts.get(label).unwrap_or(&0) as f64 / n;
            let se = (p * (1.0 - p) / n).sqrt().max(1.0 / n);
            OracleReport::new(format!("{name} {label}"), *p, freq, se, 0.0)
        })
        .collect();
    let unexpected = counts.keys().filter(|k| !pmf.iter().any(|(l, _)| l == *k)).count();
    reports.push(OracleReport::new(format!("{name} unexpected labels"), 0.0, unexpected as f64, 0.0, 0.0));
    reports
}

#[test]
fn criterion_09_predictive_consistency() {
    let started = Instant::now();
    let mut reports = Vec::new();
    let tl = ObservationTimeline::from_counts(vec![0.0, 0.5, 1.5], vec![mi(&[1, 2, 0]), mi(&[0, 1, 1]), mi(&[1, 0, 2])]).unwrap();

    let fv = FvEngine::new(&BaseMeasure::nonatomic(1.1).unwrap(), registry(3)).unwrap();
    let law = fv.smooth(&tl, 1).unwrap();
    let pmf = fv.predictive_pmf::<&str>(&law, &[]).labelled(fv.registry());
    let (counts, used) = tally(1_000_000, 91, |rng| fv.predictive_sample(&law, 1, rng).pop());
    reports.extend(frequency_reports("fv nonatomic", &pmf, &counts, used));

    let fv = FvEngine::new(&discrete_base(2.0, &[0.3, 0.2, 0.3]), registry(3)).unwrap();
    let law = fv.smooth(&tl, 2).unwrap();
    let pmf = fv.predictive_pmf::<&str>(&law, &[]).labelled(fv.registry());
    let (counts, used) = tally(1_000_000, 92, |rng| fv.predictive_sample(&law, 1, rng).pop());
    reports.extend(frequency_reports("fv discrete", &pmf, &counts, used));

    let dw_tl = ObservationTimeline::new(
        vec![0.0, 0.5, 1.5],
        vec![vec![mi(&[1, 2, 0])], vec![mi(&[0, 1, 1]), mi(&[0, 0, 0])], vec![mi(&[1, 0, 2])]],
        3,
    )
    .unwrap();
    let dw = DwEngine::new(&BaseMeasure::nonatomic(1.6).unwrap(), 0.8, registry(3)).unwrap();
    let law: GammaMixtureLaw = dw.smooth(&dw_tl, 1).unwrap();
    let first = dw.first_label_pmf(&law).unwrap().labelled(dw.registry());
    let (counts, used) = tally(1_000_000, 93, |rng| dw.predict_draw(&law, rng).unwrap().1.into_iter().next());
    reports.extend(frequency_reports("dw first label", &first, &counts, used));

    let count_pmf = dw.predict_count_pmf(&law).unwrap();
    let sizes: Vec<(String, f64)> = count_pmf.probs.iter().take(6).enumerate().map(|(n, p)| (n.to_string(), *p)).collect();
    let (counts, used) = tally(1_000_000, 94, |rng| {
        let m = dw.predict_draw(&law, rng).unwrap().0;
        (m < 6).then(|| m.to_string())
    });
    let mut size_reports = frequency_reports("dw count", &sizes, &counts, 1_000_000);
    size_reports.pop();
    let _ = used;
    reports.extend(size_reports);

    let mean_gap = (count_pmf.mean() - dw.predict_count_mean(&law)).abs();
    reports.push(OracleReport::new("dw count mean", dw.predict_count_mean(&law), count_pmf.mean(), 0.0, 1e-8));
    for r in reports.iter().filter(|r| !r.pass) {
        println!("{r}");
    }
    let (pass, detail) = summarize(&reports);
    verdict(
        9,
        "predictive samplers against analytic pmfs",
        pass && started.elapsed().as_secs_f64() < 120.0,
        &format!("{detail}, count mean gap {mean_gap:.2e}"),
        started,
    );
}

#[test]
fn criterion_10_time_limits() {
    let started = Instant::now();
    let starts: Vec<MultiIndex> = vec![mi(&[1]), mi(&[5]), mi(&[2, 3]), mi(&[1, 1, 3]), mi(&[0, 4, 1])];
    let mut worst_keep: f64 = 1.0;
    let mut worst_collapse: f64 = 1.0;
    for theta in [0.5, 1.0, 2.0, 5.0] {
        for n in &starts {
            let dim = n.dim();
            let fv = FvEngine::new(&BaseMeasure::nonatomic(theta).unwrap(), registry(dim)).unwrap();
            let law = DirichletMixtureLaw::new(Components::single(n.clone())).unwrap();
            let short = fv.propagate_forward(&law, 1e-6).unwrap();
            worst_keep = worst_keep.min(short.components.log_weight_of(n).exp());
            let long = fv.propagate_forward(&law, 200.0 / theta).unwrap();
            worst_collapse = worst_collapse.min(long.components.log_weight_of(&MultiIndex::zeros(dim)).exp());

            let dw = DwEngine::new(&BaseMeasure::nonatomic(theta).unwrap(), 1.0, registry(dim)).unwrap();
            let law = GammaMixtureLaw::new(Components::single(n.clone()), 1.0, 2.0).unwrap();
            let short = dw.propagate(&law, 1e-6).unwrap();
            worst_keep = worst_keep.min(short.components.log_weight_of(n).exp());
            let long = dw.propagate(&law, 200.0 / theta).unwrap();
            worst_collapse = worst_collapse.min(long.components.log_weight_of(&MultiIndex::zeros(dim)).exp());
        }
    }
    let pass = worst_keep > 1.0 - 1e-4 && worst_collapse > 1.0 - 1e-6;
    verdict(
        10,
        "short and long time limits",
        pass,
        &format!("min retention {worst_keep:.8}, min collapse {worst_collapse:.10}"),
        started,
    );
}
