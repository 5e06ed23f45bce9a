use fieldsim::quantity::{Dimension, Quantity, UnitError};
use proptest::prelude::*;

fn arb_dim() -> impl Strategy<Value = Dimension> {
    prop::array::uniform7(-4i32..=4).prop_map(Dimension)
}

fn arb_value() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6f64..-1e-6, 1e-6f64..1e6]
}

proptest! {
    #[test]
    fn dimension_group_laws(a in arb_dim(), b in arb_dim(), c in arb_dim(), n in -3i32..=3) {
        prop_assert_eq!(a + b, b + a);
        prop_assert_eq!((a + b) + c, a + (b + c));
        prop_assert_eq!(a + Dimension::NONE, a);
        prop_assert_eq!(a - a, Dimension::NONE);
        prop_assert_eq!(a + (-a), Dimension::NONE);
        prop_assert_eq!((a + b).pow(n), a.pow(n) + b.pow(n));
        prop_assert_eq!(a.pow(0), Dimension::NONE);
    }

    #[test]
    fn unit_string_round_trip(a in arb_dim()) {
        prop_assert_eq!(Dimension::parse(&a.unit_string()).unwrap(), a);
    }

    #[test]
    fn quantity_display_round_trip(v in arb_value(), a in arb_dim()) {
        let q = Quantity::with_dim(v, a).unwrap();
        let back: Quantity = q.to_string().parse().unwrap();
        prop_assert_eq!(back, q);
    }

    #[test]
    fn mul_div_pow_track_dimensions(x in arb_value(), y in arb_value(), a in arb_dim(), b in arb_dim(), n in -3i32..=3) {
        let p = Quantity::with_dim(x, a).unwrap();
        let q = Quantity::with_dim(y, b).unwrap();
        prop_assert_eq!(p.mul(q).unwrap().dim(), a + b);
        prop_assert_eq!(p.div(q).unwrap().dim(), a - b);
        prop_assert_eq!(p.powi(n).unwrap().dim(), a.pow(n));
        prop_assert_eq!(p.mul(q).unwrap().value(), x * y);
        let back = p.mul(q).unwrap().div(q).unwrap();
        prop_assert_eq!(back.dim(), a);
        prop_assert!((back.value() - x).abs() <= 1e-12 * x.abs());
    }

    #[test]
    fn addition_requires_equal_dimensions(x in arb_value(), y in arb_value(), a in arb_dim(), b in arb_dim()) {
        let p = Quantity::with_dim(x, a).unwrap();
        let q = Quantity::with_dim(y, b).unwrap();
        if a == b {
            prop_assert_eq!(p.add(q).unwrap().value(), x + y);
            prop_assert_eq!(p.sub(q).unwrap().dim(), a);
        } else {
            let is_mismatch = matches!(p.add(q), Err(UnitError::DimensionMismatch { .. }));
            prop_assert!(is_mismatch);
            let is_mismatch = matches!(p.sub(q), Err(UnitError::DimensionMismatch { .. }));
            prop_assert!(is_mismatch);
        }
    }
}

#[test]
fn derived_units_agree_with_base_units() {
    let j = Dimension::parse("J").unwrap();
    assert_eq!(j, Dimension::parse("kg*m^2/s^2").unwrap());
    assert_eq!(Dimension::parse("J/m^3").unwrap(), Dimension::parse("kg/m/s^2").unwrap());
    assert_eq!(Dimension::parse("T").unwrap(), Dimension::parse("kg/A/s^2").unwrap());
    // mu0 * Ms * H is an energy density
    let mu0 = Dimension::parse("kg*m/A^2/s^2").unwrap();
    let a_per_m = Dimension::parse("A/m").unwrap();
    assert_eq!(mu0 + a_per_m + a_per_m, Dimension::parse("J/m^3").unwrap());
}
