//! Sampled events against the closed forms and tabulated densities.

use std::f64::consts::TAU;

use epr_young::analysis::{
    criterion_from_events, estimate_nrel_moments, estimate_ptot_moments, fringe_histogram, HistogramAxis,
};
use epr_young::modular::ModularFrame;
use epr_young::observables::{
    analytic_moments_nrel, extended_source_variance_ptot, ideal_variance_ptot, mixture_variance_ptot,
};
use epr_young::sampler::{sample_ensemble, sample_far, sample_near, SamplerConfig};
use epr_young::states::{
    build_mme_state, build_suboptimal_state, dispersion_factors, Displacement, EprSource, GratingSpec,
    SourceEnsemble,
};
use epr_young::tabulate::{pair_pattern, EnvelopeTable, MomentumGrid};

fn setup(n: usize) -> (GratingSpec, EprSource, ModularFrame<f64>) {
    let g = GratingSpec::new(n, 1.0, 0.1).unwrap();
    let src = EprSource::new(0.05, 3.0 * n as f64, 1.0, 0.00125).unwrap();
    (g, src, g.frame(TAU).unwrap())
}

fn cfg(seed: u64, n_events: usize) -> SamplerConfig {
    SamplerConfig {
        seed,
        n_events,
        grid: MomentumGrid { grid_per_cell: 32, ..Default::default() },
        ..Default::default()
    }
}

fn scaled(frame: &ModularFrame<f64>) -> f64 {
    (frame.d / frame.h).powi(2)
}

#[test]
fn ideal_far_variance() {
    let (g, src, frame) = setup(2);
    let st = build_mme_state(&g, &src, 1.0).unwrap();
    let b = sample_far(&st, &cfg(1, 100_000), &frame).unwrap();
    let m = estimate_ptot_moments(&b, &frame, 2, 0.0).unwrap();
    let exact = (1.0 - 3.0 / std::f64::consts::PI.powi(2)) / 6.0;
    let s = scaled(&frame);
    assert!((s * m.variance - exact).abs() < 3.0 * s * m.stderr_variance);
}

#[test]
fn mixture_variance_matches_closed_form() {
    let (g, src, frame) = setup(3);
    let st = build_mme_state(&g, &src, 1.0).unwrap();
    for w in [0.3, 0.9] {
        let b = sample_far(&st, &SamplerConfig { admixture_w: w, ..cfg(2, 60_000) }, &frame).unwrap();
        let m = estimate_ptot_moments(&b, &frame, 2, 0.0).unwrap();
        let exact = mixture_variance_ptot(3, w, &frame).unwrap();
        assert!((m.variance - exact).abs() < 3.0 * m.stderr_variance, "w={w}: {} {exact}", m.variance);
    }
}

#[test]
fn classical_component_has_flat_modular_sum() {
    let (g, src, frame) = setup(2);
    let st = build_mme_state(&g, &src, 1.0).unwrap();
    let b = sample_far(&st, &SamplerConfig { admixture_w: 1.0, ..cfg(3, 50_000) }, &frame).unwrap();
    let bins = 20;
    let mut counts = vec![0.0; bins];
    for e in &b.events {
        let xi = ((e.u1 + e.u2) / frame.momentum_period()).rem_euclid(1.0);
        counts[((xi * bins as f64) as usize).min(bins - 1)] += 1.0;
    }
    let expected = b.len() as f64 / bins as f64;
    let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
    // 99.73% quantile of chi-square with 19 degrees of freedom
    assert!(chi2 < 40.63, "{chi2}");
}

#[test]
fn single_screen_shows_no_fringes() {
    let (g, src, frame) = setup(2);
    let st = build_mme_state(&g, &src, 1.0).unwrap();
    let b = sample_far(&st, &cfg(4, 100_000), &frame).unwrap();
    for axis in [HistogramAxis::Single1, HistogramAxis::Single2] {
        let h = fringe_histogram(&b, axis, 100, &frame).unwrap();
        assert!(!h.fringes_detected, "{axis:?} {}", h.fringe_statistic);
    }
    assert!(fringe_histogram(&b, HistogramAxis::Sum, 100, &frame).unwrap().fringes_detected);
}

#[test]
fn suboptimal_near_and_far_match_tables() {
    let (g, _, frame) = setup(3);
    let src = EprSource::new(0.4, 2.0, 1.0, 0.0).unwrap();
    let st = build_suboptimal_state(&g, &src, 1.0).unwrap();
    let near = sample_near(&st, &cfg(5, 40_000)).unwrap();
    let m = estimate_nrel_moments(&near, &frame, 2).unwrap();
    let exact = analytic_moments_nrel(&st, 2).variance;
    assert!((m.variance - exact).abs() < 3.0 * m.stderr_variance, "{} {exact}", m.variance);

    let grid = MomentumGrid { grid_per_cell: 32, ..Default::default() };
    let far = sample_far(&st, &cfg(6, 60_000), &frame).unwrap();
    let mf = estimate_ptot_moments(&far, &frame, 2, 0.0).unwrap();
    let exact = epr_young::observables::numeric_variance_ptot(&st, &frame, grid).unwrap();
    assert!((mf.variance - exact).abs() < 3.0 * mf.stderr_variance, "{} {exact}", mf.variance);
}

#[test]
fn extended_source_damping() {
    let (g, src, frame) = setup(2);
    let ens = SourceEnsemble { s0_p_cm: frame.momentum_period(), ..Default::default() };
    let out = sample_ensemble(&src, &g, &ens, &Displacement::default(), &cfg(7, 100_000), &frame).unwrap();
    assert_eq!(out.rejected, 0);
    let m = estimate_ptot_moments(&out.batch, &frame, 2, 0.0).unwrap();
    let (xi_cm, _) = dispersion_factors(&src, src.t_grating, 1.0);
    let exact = extended_source_variance_ptot(2, &frame, ens.s0_p_cm, xi_cm.norm());
    assert!((m.variance - exact).abs() < 3.0 * m.stderr_variance, "{} {exact}", m.variance);
}

#[test]
fn displaced_pairs_lower_the_order() {
    let (g, src, frame) = setup(3);
    let c = cfg(8, 60_000);
    let centre = Displacement { x_rel0: g.d, ..Default::default() };
    let shifted = sample_ensemble(&src, &g, &SourceEnsemble::default(), &centre, &c, &frame).unwrap();
    let plain = sample_far(&build_mme_state(&g, &src, 1.0).unwrap(), &c, &frame).unwrap();
    let a_shift = fringe_histogram(&shifted.batch, HistogramAxis::Sum, 100, &frame).unwrap().fourier_amplitude;
    let a_plain = fringe_histogram(&plain, HistogramAxis::Sum, 100, &frame).unwrap().fourier_amplitude;
    // first harmonic of F_N is (N-1)/N: 2/3 for three slits, 1/2 for two
    assert!((a_shift / a_plain - 0.75).abs() < 0.03, "{}", a_shift / a_plain);
    let m = estimate_ptot_moments(&shifted.batch, &frame, 2, 0.0).unwrap();
    let exact = ideal_variance_ptot(2, &frame);
    assert!((m.variance - exact).abs() < 3.0 * m.stderr_variance);
}

#[test]
fn closed_loop_criterion() {
    let (g, src, frame) = setup(2);
    let st = build_mme_state(&g, &src, 1.0).unwrap();
    let near = sample_near(&st, &cfg(9, 20_000)).unwrap();
    let far = sample_far(&st, &cfg(10, 20_000), &frame).unwrap();
    let r = criterion_from_events(&near, &far, &frame, false).unwrap();
    assert!(r.entangled);
    let mixed = sample_far(&st, &SamplerConfig { admixture_w: 0.9, ..cfg(11, 20_000) }, &frame).unwrap();
    let r = criterion_from_events(&near, &mixed, &frame, true).unwrap();
    assert!(!r.entangled, "{}", r.lhs);
}

/// Probability of the sum axis in `[lo, hi)` from the tables: each pixel
/// pair spreads as a triangle of half-width one pixel around its centre sum.
fn sum_reference(table: &EnvelopeTable, pattern: &[f64], edges: &[f64]) -> Vec<f64> {
    let grid = table.grid;
    let g = grid.grid_per_cell;
    let m = grid.axis_len();
    let step = table.period / g as f64;
    let mut mass = vec![0.0; 2 * m - 1];
    for i in 0..m {
        for j in 0..m {
            mass[i + j] += table.intensity[i * m + j] * pattern[(i % g) * g + j % g] * step * step;
        }
    }
    let total: f64 = mass.iter().sum();
    let tri = |x: f64| {
        let x = x.clamp(-1.0, 1.0);
        if x < 0.0 { 0.5 * (1.0 + x).powi(2) } else { 1.0 - 0.5 * (1.0 - x).powi(2) }
    };
    let c0 = 2.0 * grid.pixel_center(0, table.period);
    edges
        .windows(2)
        .map(|w| {
            mass.iter()
                .enumerate()
                .map(|(s, ms)| {
                    let c = c0 + s as f64 * step;
                    ms * (tri((w[1] - c) / step) - tri((w[0] - c) / step))
                })
                .sum::<f64>()
                / total
        })
        .collect()
}

#[test]
fn sum_histogram_converges() {
    let (g, src, frame) = setup(2);
    let st = build_mme_state(&g, &src, 1.0).unwrap();
    let grid = MomentumGrid { grid_per_cell: 32, ..Default::default() };
    let table = EnvelopeTable::new(&st, &frame, grid).unwrap();
    let pattern = pair_pattern(&st, &frame, 32, 0.0).unwrap();
    let p = frame.momentum_period();
    let edges: Vec<f64> = (0..=80).map(|k| -5.0 * p + k as f64 * p / 8.0).collect();
    let reference = sum_reference(&table, &pattern, &edges);
    let l1 = |n: usize, seed: u64| {
        let b = sample_far(&st, &cfg(seed, n), &frame).unwrap();
        let mut counts = vec![0.0; reference.len()];
        for e in &b.events {
            let s = e.u1 + e.u2;
            if s >= edges[0] && s < edges[80] {
                counts[((s - edges[0]) / (p / 8.0)) as usize] += 1.0;
            }
        }
        counts.iter().zip(&reference).map(|(c, r)| (c / n as f64 - r).abs()).sum::<f64>()
    };
    let small: f64 = (0..4).map(|s| l1(10_000, 100 + s)).sum();
    let large: f64 = (0..4).map(|s| l1(40_000, 200 + s)).sum();
    let ratio = small / large;
    assert!((1.6..2.5).contains(&ratio), "{ratio}");
}

#[test]
fn estimators_match_closed_forms_across_n() {
    for n in [2, 4, 5] {
        let (g, src, frame) = setup(n);
        let st = build_mme_state(&g, &src, 1.0).unwrap();
        let b = sample_far(&st, &cfg(20 + n as u64, 40_000), &frame).unwrap();
        let m = estimate_ptot_moments(&b, &frame, 2, 0.0).unwrap();
        let exact = ideal_variance_ptot(n, &frame);
        assert!((m.variance - exact).abs() < 3.0 * m.stderr_variance, "N={n}");
    }
}
