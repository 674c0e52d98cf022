//! Reference configurations used by tests, examples and the command line.

use crate::disc::Disc;
use crate::padic::{int, rat, Exponent, Mobius, Prime};
use crate::schottky::{GoodFundamentalDomain, SchottkyGroup};
use crate::spectral::ComponentConfig;
use crate::ultrametric::{Branching, Normalization, OmegaForm, OrbitShape};

fn e(n: i64) -> Exponent {
    Exponent::from_integer(n)
}

/// Tate curve over `Q_2` with `q = 4`.
///
/// `F = {1/4 < |z| ≤ 1}` with orbits around 1 and 2 and the invariant form
/// `dz/z`.
pub fn tate(alpha: Exponent) -> ComponentConfig {
    let p = Prime::new(2).expect("prime");
    let gamma = Mobius::from_i64(4, 0, 0, 1, p).expect("nonsingular");
    let group = SchottkyGroup::new(p, vec![gamma]).expect("hyperbolic");
    let d1 = Disc::closed(p, int(0), e(0)).complement();
    let d2 = Disc::closed(p, int(0), e(-2));
    ComponentConfig {
        group,
        fundamental_domain: GoodFundamentalDomain::new(1, vec![d1, d2]).expect("two discs"),
        omega: OmegaForm::new(vec![int(1)], vec![int(0), int(1)]).expect("nonzero denominator"),
        orbits: vec![
            OrbitShape {
                center: int(1),
                rho: -1,
                branching: Branching::Regular,
            },
            OrbitShape {
                center: int(2),
                rho: -2,
                branching: Branching::Regular,
            },
        ],
        normalization: Normalization::DiameterRule,
        alpha,
    }
}

/// Genus-two Schottky group over `Q_5` with the constant form.
pub fn genus_two(alpha: Exponent) -> ComponentConfig {
    let p = Prime::new(5).expect("prime");
    let g1 = Mobius::from_i64(2, 5, 1, 0, p).expect("nonsingular");
    let g2 = Mobius::from_i64(3, 2, 1, -1, p).expect("nonsingular");
    let group = SchottkyGroup::new(p, vec![g1, g2]).expect("hyperbolic");
    let discs = vec![
        Disc::closed(p, int(0), e(-1)),
        Disc::closed(p, int(1), e(-1)),
        Disc::open(p, int(2), e(0)),
        Disc::open(p, int(3), e(0)),
    ];
    ComponentConfig {
        group,
        fundamental_domain: GoodFundamentalDomain::new(2, discs).expect("four discs"),
        omega: OmegaForm::constant_one(),
        orbits: vec![
            OrbitShape {
                center: int(4),
                rho: -1,
                branching: Branching::Regular,
            },
            OrbitShape {
                center: rat(1, 5),
                rho: 0,
                branching: Branching::Regular,
            },
        ],
        normalization: Normalization::DiameterRule,
        alpha,
    }
}
