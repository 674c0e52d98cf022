//! Property tests for the invariants of every module.

use std::sync::OnceLock;

use proptest::prelude::*;
use ultralap::bvp::{edge_boundary, vertex_boundary, Region};
use ultralap::configs;
use ultralap::disc::Disc;
use ultralap::heat::{solve_cauchy, total_mass, SpectralDecomposition};
use ultralap::padic::{
    abs_diff, abs_p, val_diff, Exponent, Mobius, Prime, ProjectivePoint, Rational, ResidueRing,
};
use ultralap::schottky::{gamma_length_series, Letter, Word};
use ultralap::spectral::{
    assemble_matrix, dirichlet_form, eigenpairs, CouplingConfig, Model, OperatorMatrix,
    SpectralOptions,
};
use ultralap::ultrametric::translate_distance_by;
use ultralap::wavelets::{helmert, helmert_exact};

fn rational() -> impl Strategy<Value = Rational> {
    (-2000i64..2000, 1i64..500).prop_map(|(n, d)| Rational::new(n.into(), d.into()))
}

fn prime() -> impl Strategy<Value = Prime> {
    prop::sample::select(vec![2u32, 3, 5, 7, 11]).prop_map(|p| Prime::new(p).unwrap())
}

fn mobius(p: Prime) -> impl Strategy<Value = Mobius> {
    (-20i64..20, -20i64..20, -20i64..20, -20i64..20)
        .prop_filter("nonsingular", |(a, b, c, d)| a * d - b * c != 0)
        .prop_map(move |(a, b, c, d)| Mobius::from_i64(a, b, c, d, p).unwrap())
}

fn word(genus: usize) -> impl Strategy<Value = Word> {
    prop::collection::vec(0..2 * genus as u8, 0..8)
        .prop_map(move |ls| Word::from_letters(genus, ls.into_iter().map(Letter)))
}

struct Fixture {
    model: Model,
    matrix: OperatorMatrix,
    decomposition: SpectralDecomposition,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let cfg = configs::tate(Exponent::from_integer(2));
        let coupling = CouplingConfig::new(
            vec![
                vec![
                    Rational::from_integer(0.into()),
                    Rational::new(1.into(), 2.into()),
                ],
                vec![
                    Rational::new(1.into(), 2.into()),
                    Rational::from_integer(0.into()),
                ],
            ],
            Exponent::from_integer(1),
        )
        .unwrap();
        let model = Model::build(
            &[cfg.clone(), cfg],
            coupling,
            2,
            SpectralOptions {
                l_max: 4,
                ..Default::default()
            },
        )
        .unwrap();
        let matrix = assemble_matrix(&model);
        let pairs = eigenpairs(&model, &matrix).unwrap();
        let decomposition =
            SpectralDecomposition::from_eigenpairs(&pairs, matrix.mu.clone(), |_| 0);
        Fixture {
            model,
            matrix,
            decomposition,
        }
    })
}

proptest! {
    #[test]
    fn ultrametric_inequality(p in prime(), x in rational(), y in rational()) {
        let s = &x + &y;
        let bound = abs_p(&x, p).max(abs_p(&y, p));
        prop_assert!(abs_p(&s, p) <= bound);
    }

    #[test]
    fn absolute_value_is_multiplicative(p in prime(), x in rational(), y in rational()) {
        prop_assert_eq!(abs_p(&(&x * &y), p), abs_p(&x, p).mul(&abs_p(&y, p)));
    }

    #[test]
    fn residues_decide_valuations(p in prime(), x in rational(), y in rational()) {
        prop_assume!(x != y);
        let ring = ResidueRing::new(p);
        if let Some(v) = ring.val_diff(ring.of(&x), ring.of(&y)) {
            prop_assert_eq!(v, val_diff(&x, &y, p));
        }
    }

    #[test]
    fn mobius_composition_acts((m, n) in prime().prop_flat_map(|p| (mobius(p), mobius(p))), x in rational()) {
        let direct = m.compose(&n).apply_finite(&x);
        let stepwise = m.apply(&n.apply_finite(&x));
        prop_assert_eq!(direct, stepwise);
        prop_assert!(m.compose(&m.inverse()).is_identity());
    }

    #[test]
    fn disc_images_contain_point_images(
        (p, m) in prime().prop_flat_map(|p| (Just(p), mobius(p))),
        c in rational(),
        rho in -3i64..3,
        offsets in prop::collection::vec(-100i64..100, 1..5),
    ) {
        let d = Disc::closed(p, c.clone(), Exponent::from_integer(rho));
        let img = d.image(&m);
        let scale = p.pow_rational(-rho);
        for o in offsets {
            let x = &c + Rational::from_integer(o.into()) * &scale;
            prop_assert!(d.contains_rational(&x));
            prop_assert!(img.contains(&m.apply_finite(&x)));
        }
    }

    #[test]
    fn words_form_a_group(u in word(2), v in word(2), w in word(2)) {
        prop_assert_eq!(u.mul(&v).mul(&w), u.mul(&v.mul(&w)));
        prop_assert!(u.mul(&u.inverse()).is_empty());
        let ls = u.letters();
        prop_assert!(ls.windows(2).all(|x| x[1] != x[0].inverse(2)));
    }

    #[test]
    fn words_map_homomorphically(u in word(2), v in word(2)) {
        let g = configs::genus_two(Exponent::from_integer(2)).group;
        prop_assert_eq!(g.word_to_mobius(&u.mul(&v)), g.word_to_mobius(&u).compose(&g.word_to_mobius(&v)));
    }

    #[test]
    fn length_series_brackets(g in 1usize..4, l in 0usize..12, s in 1i64..4) {
        let p = Prime::new(7).unwrap();
        let r = gamma_length_series(g, p, Exponent::from_integer(s), l).unwrap();
        let (t, tail, c) = (r.truncated.exact().unwrap(), r.tail.exact().unwrap(), r.closed_form.exact().unwrap());
        prop_assert_eq!(&(t + tail), c);
        prop_assert!(tail > &Rational::from_integer(0.into()));
    }

    #[test]
    fn translate_distance_is_symmetric(u in word(2), i in 0usize..50, j in 0usize..50) {
        let cfg = configs::genus_two(Exponent::from_integer(2));
        let f = fixture_genus_two();
        prop_assume!(i != j || !u.is_empty());
        let (x, y) = (f.leaf_center(i), f.leaf_center(j));
        let m = cfg.group.word_to_mobius(&u);
        prop_assert_eq!(translate_distance_by(&m, x, y), translate_distance_by(&m.inverse(), y, x));
    }

    #[test]
    fn helmert_is_orthonormal_and_mean_zero(masses in prop::collection::vec(1i64..50, 2..7)) {
        let exact: Vec<Rational> = masses.iter().map(|&m| Rational::new(m.into(), 100.into())).collect();
        for v in helmert_exact(&exact) {
            let s: Rational = v.iter().zip(&exact).map(|(a, b)| a * b).sum();
            prop_assert_eq!(s, Rational::from_integer(0.into()));
        }
        let f: Vec<f64> = masses.iter().map(|&m| m as f64 / 100.0).collect();
        let h = helmert(&f);
        for (i, a) in h.iter().enumerate() {
            let mean: f64 = a.iter().zip(&f).map(|(x, m)| x * m).sum();
            prop_assert!(mean.abs() < 1e-12);
            for (j, b) in h.iter().enumerate() {
                let ip: f64 = a.iter().zip(b).zip(&f).map(|((x, y), m)| x * y * m).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                prop_assert!((ip - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dirichlet_form_is_symmetric_positive(u in prop::collection::vec(-1.0f64..1.0, 32), v in prop::collection::vec(-1.0f64..1.0, 32), c in -2.0f64..2.0) {
        let f = fixture();
        let n = f.matrix.n();
        let (u, v) = (&u[..n], &v[..n]);
        let m = &f.matrix;
        prop_assert!(dirichlet_form(u, u, m) >= -1e-12);
        prop_assert!((dirichlet_form(u, v, m) - dirichlet_form(v, u, m)).abs() < 1e-10);
        let w: Vec<f64> = u.iter().zip(v).map(|(a, b)| a + c * b).collect();
        let lin = dirichlet_form(u, u, m) + c * dirichlet_form(v, u, m);
        prop_assert!((dirichlet_form(&w, u, m) - lin).abs() < 1e-9);
        let mu = m.apply(u);
        prop_assert!((dirichlet_form(u, v, m) + m.inner(&mu, v)).abs() < 1e-9);
        prop_assert!(dirichlet_form(&vec![c; n], v, m).abs() < 1e-12);
    }

    #[test]
    fn heat_flow_is_positive_contractive_conservative(u in prop::collection::vec(0.0f64..1.0, 32), t in 0.0f64..3.0, s in 0.0f64..1.0) {
        let f = fixture();
        let d = &f.decomposition;
        let u0 = &u[..d.n()];
        let ut = solve_cauchy(u0, t, d).unwrap();
        let uts = solve_cauchy(u0, t + s, d).unwrap();
        prop_assert!(ut.iter().all(|&x| x >= -1e-8));
        prop_assert!((total_mass(&ut, &d.mu) - total_mass(u0, &d.mu)).abs() < 1e-10);
        prop_assert!(d.inner(&uts, &uts) <= d.inner(&ut, &ut) + 1e-12);
        prop_assert!(solve_cauchy(u0, -1.0, d).is_err());
    }

    #[test]
    fn boundaries_respect_complements(members in prop::collection::vec(any::<bool>(), 32)) {
        let f = fixture();
        let n = f.model.num_leaves();
        let leaves: Vec<usize> = (0..n).filter(|&i| members[i]).collect();
        prop_assume!(!leaves.is_empty() && leaves.len() < n);
        let s = Region::new(n, leaves).unwrap();
        let c = s.complement().unwrap();
        let db = vertex_boundary(&s, &f.matrix);
        prop_assert!(db.iter().all(|&x| !s.contains(x)));
        prop_assert_eq!(db.len(), n - s.len());
        let eb = edge_boundary(&s, &f.matrix);
        prop_assert_eq!(eb.len(), edge_boundary(&c, &f.matrix).len());
        prop_assert!(eb.iter().all(|&(x, y)| s.contains(x) && !s.contains(y)));
    }
}

fn fixture_genus_two() -> &'static ultralap::ultrametric::MeasuredDomain {
    static D: OnceLock<ultralap::ultrametric::MeasuredDomain> = OnceLock::new();
    D.get_or_init(|| {
        configs::genus_two(Exponent::from_integer(2))
            .build(0, 2)
            .unwrap()
            .partition
    })
}

#[test]
fn point_images_stay_off_infinity() {
    let p = Prime::new(2).unwrap();
    let m = Mobius::from_i64(0, 1, 1, 0, p).unwrap();
    assert_eq!(
        m.apply_finite(&Rational::from_integer(0.into())),
        ProjectivePoint::Infinity
    );
    assert!(
        abs_diff(
            &Rational::from_integer(1.into()),
            &Rational::from_integer(3.into()),
            p
        ) < abs_p(&Rational::from_integer(1.into()), p)
    );
}
