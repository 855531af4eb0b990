use std::sync::{Arc, Mutex};
use tubecav::consts::C0;
use tubecav::geometry::{cutoff_frequency, preset, preset_with_half_length, CavityGeometry, PresetName, Tube};
use tubecav::modesolver::{
    self, build, discretize, observed_order, slater_shift_degenerate, solve_modes, BoxRegion, Deformation, DomainSource, EigenMode, Patch,
    DEFAULT_UNKNOWN_BUDGET, DIVERGENCE_TOLERANCE, RESIDUAL_TOLERANCE,
};

static SOLVER: Mutex<()> = Mutex::new(());

fn lock() -> std::sync::MutexGuard<'static, ()> {
    SOLVER.lock().unwrap_or_else(|e| e.into_inner())
}

/// Lowest mode, with the shift placed well under the expected frequency.
fn lowest(g: &CavityGeometry, res: f64, expected: f64) -> EigenMode {
    let dom = Arc::new(discretize(g, res).unwrap());
    solve_modes(dom, 0.8 * expected, 1).unwrap().remove(0)
}

#[test]
fn straight_tube_stays_above_cutoff() {
    let _l = lock();
    let d = 1.6e-3;
    let t = Tube::new([0.0; 3], [1.0, 0.0, 0.0], d, 4.0 * d).unwrap();
    let g = CavityGeometry::new(vec![t], vec![]).unwrap();
    let fc = cutoff_frequency(d).unwrap();
    let m = lowest(&g, 10.0, fc);
    // closed tube of length 8d: TE111 sits just above the TE11 cutoff
    let te111 = (fc * fc + (C0 / (16.0 * d)).powi(2)).sqrt();
    assert!(m.frequency > 0.98 * fc, "{} vs {fc}", m.frequency);
    assert!((m.frequency / te111 - 1.0).abs() < 0.02, "{} vs {te111}", m.frequency);
}

#[test]
fn adding_tubes_lowers_the_mode() {
    let _l = lock();
    let fc = cutoff_frequency(1.6e-3).unwrap();
    let f: Vec<f64> = [PresetName::Elbow, PresetName::Tee, PresetName::Star4]
        .iter()
        .map(|&p| {
            let m = lowest(&preset(p), 10.0, p.target_frequency());
            assert!(m.residual <= RESIDUAL_TOLERANCE, "{}", m.residual);
            assert!(m.divergence <= DIVERGENCE_TOLERANCE);
            m.frequency
        })
        .collect();
    assert!(f[2] < f[1] && f[1] < f[0] && f[0] < fc, "{f:?}");
}

/// Fraction of node-sampled |E|^2 farther than `radius` from the origin.
fn outside_fraction(m: &EigenMode, radius: f64) -> f64 {
    let dom = &m.domain;
    let (mut all, mut out) = (0.0, 0.0);
    for i in 0..dom.nodes[0] {
        for j in 0..dom.nodes[1] {
            for k in 0..dom.nodes[2] {
                let e = m.node_field(i, j, k);
                let w = e[0] * e[0] + e[1] * e[1] + e[2] * e[2];
                let p = dom.node_pos(i, j, k);
                all += w;
                if (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() > radius {
                    out += w;
                }
            }
        }
    }
    out / all
}

#[test]
fn bound_state_is_localized() {
    let _l = lock();
    let d = 1.6e-3;
    let frac: Vec<f64> = [3.0, 4.0, 5.0]
        .iter()
        .map(|&hl| outside_fraction(&lowest(&preset_with_half_length(PresetName::Tee, hl), 10.0, 98e9), 1.5 * d))
        .collect();
    assert!(frac[0] < 0.5, "{frac:?}");
    // longer arms leave the field where it was
    assert!(frac.iter().all(|f| (f / frac[0] - 1.0).abs() < 0.05), "{frac:?}");
}

#[test]
fn box_converges_at_second_order() {
    let _l = lock();
    let (a, b, l) = (2.0e-3, 1.0e-3, 2.5e-3);
    let exact = modesolver::box_te101(a, l);
    let f: Vec<f64> = [8.0, 12.0, 18.0]
        .iter()
        .map(|&n| {
            let dom = Arc::new(build(DomainSource::Box(BoxRegion::new(a, b, l)), b / n, DEFAULT_UNKNOWN_BUDGET).unwrap());
            solve_modes(dom, exact, 1).unwrap()[0].frequency
        })
        .collect();
    let p = observed_order(f[0], f[1], f[2], 1.5);
    assert!(p >= 1.5, "order {p}, {f:?}");
    assert!((f[2] - exact).abs() < (f[0] - exact).abs());
}

#[test]
fn mode_volume_converges() {
    let _l = lock();
    let g = preset(PresetName::Cross3Hybrid);
    let coarse = lowest(&g, 10.0, 98.2e9);
    let fine = lowest(&g, 20.0, 98.2e9);
    let (vc, vf) = (coarse.summary().v_over_lambda3, fine.summary().v_over_lambda3);
    assert!((vc / vf - 1.0).abs() < 0.05, "{vc} vs {vf}");
    assert!(vf > 0.0 && vf < 1.0);
}

#[test]
fn slater_matches_resolve() {
    let _l = lock();
    let g = preset(PresetName::Cross3Hybrid);
    let res = 12.0;
    let h = g.min_diameter() / res;
    let patch = Patch {
        tube: 2,
        axial: (1.1e-3, 2.25e-3),
        azimuth: (-3.2, 3.2),
        reference: [1.0, 0.0, 0.0],
    };
    let def = Deformation { patch, delta: -0.1 * h };
    def.validate(&g).unwrap();
    assert!(def.first_order_valid(h));
    // the lowest cross3 mode is a triplet
    let solve = |delta: f64| {
        let src = DomainSource::Deformed(g.clone(), Deformation { patch, delta });
        let dom = Arc::new(build(src, h, DEFAULT_UNKNOWN_BUDGET).unwrap());
        solve_modes(dom, 0.8 * 98.2e9, 3).unwrap()
    };
    let base = solve(0.0);
    let moved = solve(def.delta);
    let predicted = slater_shift_degenerate(&base, &def).unwrap();
    let freqs = |m: &[EigenMode]| {
        let mut f: Vec<f64> = m.iter().map(|m| m.frequency).collect();
        f.sort_by(|a, b| a.total_cmp(b));
        f
    };
    let actual: Vec<f64> = freqs(&moved).iter().zip(freqs(&base)).map(|(a, b)| a - b).collect();
    for (p, a) in predicted.iter().zip(&actual).take(2) {
        assert!(*p < 0.0 && *a < 0.0, "{predicted:?} {actual:?}");
        assert!((p / a - 1.0).abs() < 0.3, "{predicted:?} vs {actual:?}");
    }
}
