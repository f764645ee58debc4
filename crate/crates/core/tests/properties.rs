use msktap::geometry::{SensitivityDomain, Weighting};
use msktap::kernels::{consensus_node, KernelSet, Pairing, RateForm, TransitionForm};
use msktap::operators::{apply, full_rhs, homogeneous_rhs, OperatorKind};
use msktap::oracle::{oracle_density, tiny_instance};
use msktap::state::{density, moments};
use msktap::transport::{advect, TransportScheme};
use msktap::verify::consistency_config;
use msktap::{ActivityGrid, Boundary, DistributionField, Model, PhaseGrid, SpaceGrid, VelocityGrid};
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn grid(nx: usize, ny: usize, nv: usize, na: usize, boundary: Boundary) -> PhaseGrid<f64> {
    PhaseGrid::new(
        SpaceGrid::new(nx as f64, ny as f64, nx, ny, boundary).unwrap(),
        VelocityGrid::uniform(nv, 1, 1.0).unwrap(),
        ActivityGrid::new(na).unwrap(),
    )
}

fn field_from(grid: &PhaseGrid<f64>, subsystems: usize, raw: &[f64]) -> DistributionField<f64> {
    let len = subsystems * grid.states();
    let values = (0..len).map(|i| raw[i % raw.len()]).collect();
    DistributionField::from_values(subsystems, grid, values).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn density_is_linear_and_matches_direct_sum(
        nx in 1usize..4, ny in 1usize..4, nv in 1usize..5, na in 1usize..6,
        raw_f in prop::collection::vec(0.0f64..2.0, 1..40),
        raw_g in prop::collection::vec(0.0f64..2.0, 1..40),
        a in 0.0f64..3.0, b in 0.0f64..3.0,
    ) {
        let g = grid(nx, ny, nv, na, Boundary::Periodic);
        let f = field_from(&g, 1, &raw_f);
        let h = field_from(&g, 1, &raw_g);
        let mut mix = f.scaled(a);
        mix.add_scaled(b, &h);
        let (df, dh, dm) = (density(&f, 0, &g), density(&h, 0, &g), density(&mix, 0, &g));
        let direct = oracle_density(&f, 0, &g);
        for c in 0..g.space.n_cells() {
            prop_assert!(rel(dm[c], a * df[c] + b * dh[c]) <= 1e-12);
            prop_assert!(rel(df[c], direct[c]) <= 1e-12);
        }
        let mf = moments(&f, 0, &g);
        for c in 0..g.space.n_cells() {
            if let Some(u) = mf.mean_activity_at(c) {
                prop_assert!((0.0..=1.0).contains(&u));
            }
        }
    }

    #[test]
    fn sector_membership_rotates_with_heading(
        n in prop::sample::select(vec![3usize, 5, 7]),
        cell in 0usize..49,
        k in 0usize..8,
        half_deg in 10.0f64..180.0,
        radius in 0.5f64..4.0,
    ) {
        let g = grid(n, n, 8, 1, Boundary::Periodic);
        let space = &g.space;
        let x = cell % space.n_cells();
        let dom = SensitivityDomain::from_degrees(half_deg, radius, Weighting::Indicator).unwrap();
        let (cx, cy) = space.coords(x);
        let rotate = |c: usize| {
            let (ix, iy) = space.coords(c);
            let dx = ix as i64 - cx as i64;
            let dy = iy as i64 - cy as i64;
            let n = n as i64;
            space.index((cx as i64 - dy).rem_euclid(n) as usize, (cy as i64 + dx).rem_euclid(n) as usize)
        };
        let before: Vec<usize> = dom.quadrature(space, x, g.velocity.direction(k)).into_iter().map(|(c, _)| rotate(c)).collect();
        let mut after: Vec<usize> = dom.quadrature(space, x, g.velocity.direction((k + 2) % 8)).into_iter().map(|(c, _)| c).collect();
        let mut before = before;
        before.sort();
        after.sort();
        prop_assert_eq!(before, after);
    }

    #[test]
    fn sector_weights_and_monotonicity(
        nx in 1usize..7, ny in 1usize..7, cell in 0usize..36, k in 0usize..8,
        half in 0.1f64..3.1, radius in 0.3f64..5.0, grow_h in 0.0f64..1.0, grow_r in 0.0f64..2.0,
        periodic in any::<bool>(),
    ) {
        let g = grid(nx, ny, 8, 1, if periodic { Boundary::Periodic } else { Boundary::Absorbing });
        let x = cell % g.space.n_cells();
        let dir = g.velocity.direction(k);
        let small = SensitivityDomain::new(half, radius, Weighting::UniformNormalized).unwrap();
        let big = SensitivityDomain::new((half + grow_h).min(std::f64::consts::PI), radius + grow_r, Weighting::UniformNormalized).unwrap();
        let q = small.quadrature(&g.space, x, dir);
        prop_assert!(!q.is_empty());
        let total: f64 = q.iter().map(|(_, w)| w).sum();
        prop_assert!((total - 1.0).abs() <= 1e-15);
        let bigger: Vec<usize> = big.quadrature(&g.space, x, dir).into_iter().map(|(c, _)| c).collect();
        for (c, _) in q {
            prop_assert!(bigger.contains(&c));
        }
    }

    #[test]
    fn consensus_lands_between_inputs(n in 1usize..12, nf in 1usize..12, p in 0usize..12, q in 0usize..12, mu in 0.0f64..=1.0) {
        let g = ActivityGrid::<f64>::new(n).unwrap();
        let (p, q) = (p % n, q % n);
        let out = consensus_node(&g, p, &g, q, mu);
        prop_assert!(out >= p.min(q) && out <= p.max(q));
        // across grids: within one node of the interval
        let gf = ActivityGrid::<f64>::new(nf).unwrap();
        let qf = q % nf;
        let out = consensus_node(&g, p, &gf, qf, mu);
        let (lo, hi) = {
            let (a, b) = (g.node(p), gf.node(qf));
            (a.min(b), a.max(b))
        };
        let u = g.node(out);
        prop_assert!(u >= lo - g.weight() - 1e-12 && u <= hi + g.weight() + 1e-12);
    }

    #[test]
    fn conservative_operators_conserve_mass_per_cell(seed in 0u64..10_000) {
        let inst = tiny_instance(seed).unwrap();
        for kind in [OperatorKind::FsFs, OperatorKind::FsSfs, OperatorKind::SfsSfs, OperatorKind::SfsFs] {
            let out = apply(kind, &inst.model, &inst.f, &inst.phi).unwrap();
            let g = &inst.model.scale(kind.output_scale()).grid;
            for s in 0..out.subsystems() {
                for x in 0..out.cells() {
                    let mut sum = 0.0;
                    for v in 0..out.velocities() {
                        for a in 0..out.activities() {
                            sum += out.get(s, x, v, a) * g.velocity.weights[v] * g.activity.weight();
                        }
                    }
                    prop_assert!(sum.abs() <= 1e-10, "{kind} s{s} x{x}: {sum}");
                }
            }
        }
    }

    #[test]
    fn operators_match_oracle(seed in 0u64..1_000_000) {
        let inst = tiny_instance(seed).unwrap();
        for kind in OperatorKind::ALL {
            let fast = apply(kind, &inst.model, &inst.f, &inst.phi).unwrap();
            let err = msktap::oracle::relative_error(kind, &inst.model, &inst.f, &inst.phi, &fast).unwrap();
            prop_assert!(err <= 1e-12, "seed {seed} {kind}: {err}");
        }
    }

    #[test]
    fn operators_are_bilinear(lambda in 0.1f64..4.0, seed in 0u64..1000) {
        let g = grid(2, 2, 3, 3, Boundary::Periodic);
        let mut k = KernelSet::new(1, 1);
        k.set_rate(Pairing::FsFs, 0, 0, RateForm::Constant { alpha0: 0.7 }).unwrap();
        k.set_transition(Pairing::FsFs, 0, 0, TransitionForm::VelocityAlignment { lambda: 0.5, lambda_activity: 0.2, mu: 0.3 }).unwrap();
        k.set_rate(Pairing::FsSfs, 0, 0, RateForm::Constant { alpha0: 0.4 }).unwrap();
        k.set_transition(Pairing::FsSfs, 0, 0, TransitionForm::ActivityConsensus { mu: 0.5 }).unwrap();
        k.set_rate(Pairing::SfsSfs, 0, 0, RateForm::Constant { alpha0: 0.2 }).unwrap();
        k.set_transition(Pairing::SfsSfs, 0, 0, TransitionForm::ActivityConsensus { mu: 0.9 }).unwrap();
        k.set_rate(Pairing::SfsFs, 0, 0, RateForm::Constant { alpha0: 0.3 }).unwrap();
        k.set_transition(Pairing::SfsFs, 0, 0, TransitionForm::ActivityConsensus { mu: 0.4 }).unwrap();
        k.set_proliferation(msktap::Scale::Fs, 0, 0, Some(msktap::kernels::GainForm::ActivityGated { p: 0.5 }), Some(msktap::kernels::LossForm::Constant { l: 0.2 })).unwrap();
        k.set_proliferation(msktap::Scale::Sfs, 0, 0, Some(msktap::kernels::GainForm::Constant { p: 0.5 }), None).unwrap();
        let dom = SensitivityDomain::from_degrees(90.0, 1.5, Weighting::Indicator).unwrap();
        let model = Model::new(g.clone(), dom, g.clone(), dom, k).unwrap();
        let vals = |s: u64| (0..g.states()).map(|i| (((i as u64 + s) * 2654435761) % 97) as f64 / 97.0).collect::<Vec<_>>();
        let f = DistributionField::from_values(1, &g, vals(seed)).unwrap();
        let phi = DistributionField::from_values(1, &g, vals(seed + 7)).unwrap();
        let close = |a: &DistributionField<f64>, b: &DistributionField<f64>, factor: f64| {
            let scale = b.values().iter().fold(0.0f64, |m, x| m.max(x.abs())) * factor.abs();
            a.values().iter().zip(b.values()).all(|(x, y)| (x - factor * y).abs() <= 1e-12 * scale.max(1e-300))
        };
        let fl = f.scaled(lambda);
        let pl = phi.scaled(lambda);
        for kind in OperatorKind::ALL {
            let base = apply(kind, &model, &f, &phi).unwrap();
            let by_f = apply(kind, &model, &fl, &phi).unwrap();
            let by_phi = apply(kind, &model, &f, &pl).unwrap();
            let (ef, ep) = match kind {
                OperatorKind::FsFs | OperatorKind::FsProliferative => (lambda * lambda, 1.0),
                OperatorKind::SfsSfs => (1.0, lambda * lambda),
                _ => (lambda, lambda),
            };
            prop_assert!(close(&by_f, &base, ef), "{kind} scaling f");
            prop_assert!(close(&by_phi, &base, ep), "{kind} scaling phi");
        }
    }

    #[test]
    fn transport_conserves_and_stays_positive(
        nx in 1usize..8, ny in 1usize..8, nv in 1usize..9, na in 1usize..3,
        raw in prop::collection::vec(0.0f64..5.0, 1..60),
        cfl in 0.0f64..=1.0, periodic in any::<bool>(), steps in 1usize..6,
    ) {
        let g = grid(nx, ny, nv, na, if periodic { Boundary::Periodic } else { Boundary::Absorbing });
        let mut f = field_from(&g, 1, &raw);
        let m0 = f.total_mass(0, &g);
        let dt = cfl * g.space.dx().min(g.space.dy()) / g.velocity.v_max();
        let scheme = TransportScheme::default();
        for _ in 0..steps {
            f = advect(&f, dt, &g.space, &g.velocity, &scheme).unwrap();
            prop_assert!(f.values().iter().all(|x| *x >= 0.0));
        }
        let m1 = f.total_mass(0, &g);
        if periodic {
            prop_assert!(rel(m0, m1) <= 1e-12 * steps as f64);
        } else {
            prop_assert!(m1 <= m0 * (1.0 + 1e-12));
        }
    }
}

#[test]
fn identity_transitions_give_zero_net_operator() {
    for seed in 0..30 {
        let mut inst = tiny_instance(seed).unwrap();
        let mut k = KernelSet::new(inst.model.n(), inst.model.m());
        for p in Pairing::ALL {
            let nc = inst.model.kernels.count(p.candidate());
            let nf = inst.model.kernels.count(p.field());
            for c in 0..nc {
                for h in 0..nf {
                    if let Some(r) = inst.model.kernels.rate(p, c, h) {
                        k.set_rate(p, c, h, r.form).unwrap();
                        k.set_transition(p, c, h, TransitionForm::Identity).unwrap();
                    }
                }
            }
        }
        inst.model.kernels = k;
        for kind in [
            OperatorKind::FsFs,
            OperatorKind::FsSfs,
            OperatorKind::SfsSfs,
            OperatorKind::SfsFs,
        ] {
            let out = apply(kind, &inst.model, &inst.f, &inst.phi).unwrap();
            assert!(out.values().iter().all(|x| x.abs() <= 1e-14), "seed {seed} {kind}");
        }
    }
}

#[test]
fn uniform_cells_reduce_to_homogeneous_rhs() {
    let cfg = consistency_config(1.0, 0.1).unwrap();
    let spatial = cfg.build_spatial::<f64>().unwrap();
    let homog = cfg.build_homogeneous::<f64>().unwrap();
    let full = full_rhs(&spatial.model, &spatial.initial.f, &spatial.initial.phi).unwrap();
    let reduced = homogeneous_rhs(&homog.model, &homog.initial.f, &homog.initial.phi).unwrap();
    for (out, red) in [(&full.fs, &reduced.fs), (&full.sfs, &reduced.sfs)] {
        for s in 0..out.subsystems() {
            for x in 0..out.cells() {
                for v in 0..out.velocities() {
                    for a in 0..out.activities() {
                        let d = (out.get(s, x, v, a) - red.get(s, 0, 0, a)).abs();
                        assert!(d <= 1e-10, "s{s} x{x} v{v} a{a}: {d}");
                    }
                }
            }
        }
    }
}
