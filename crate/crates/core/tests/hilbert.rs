use kimura_core::hilbert::*;
use kimura_core::FaceSpec;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};

fn series(name: &str) -> NamedSeries {
    series_fixture()
        .series
        .into_iter()
        .find(|s| s.name == name)
        .unwrap()
}

#[test]
fn numerators_round_trip() {
    for s in series_fixture().series {
        let data = s.data();
        let k = data.numerator.len() + data.denom_exp + 2;
        let vals = expand_series(&data, k);
        assert_eq!(
            h_numerator(&vals, data.denom_exp - 1).unwrap(),
            data.numerator,
            "{}",
            s.name
        );
    }
}

#[test]
fn numerator_degrees_give_regularity() {
    let fx = series_fixture();
    let degs: Vec<usize> = fx.series.iter().map(|s| s.numerator.len() - 1).collect();
    assert_eq!(degs, vec![15, 13, 13]);
    for s in &fx.series {
        let data = s.data();
        let dim = data.denom_exp - 1;
        let vals = expand_series(&data, dim + data.numerator.len() + 1);
        let rec = HilbertRecord::from_values(6, &s.face, dim, vals).unwrap();
        let (reg, a) = regularity_bound(&rec).unwrap();
        assert_eq!(reg, s.numerator.len());
        assert!(a < 0);
        assert!(rec.h_is_nonnegative());
    }
}

#[test]
fn hilbert_polynomial_of_full_polytope() {
    let fx = series_fixture();
    let n = series("P").data();
    let vals = expand_series(&n, 24);
    let poly = fit_ehrhart(&vals, 18).unwrap();
    assert_eq!(poly.coeffs, fx.hilbert_polynomial_p.coefficients());
    // Leading coefficient times 18! equals h(1).
    let rec = HilbertRecord::from_values(6, &FaceSpec::empty(), 18, vals).unwrap();
    assert_eq!(rec.normalized_volume, numerator_at_one(&n));
    assert_eq!(rec.normalized_volume, BigInt::from(34_193_665_536u64));
    // Negative a-invariant: the polynomial vanishes at −1, −2, −3.
    for j in 1..=3 {
        assert!(poly.eval_int(-j).is_zero());
    }
    assert!(!poly.eval_int(-4).is_zero());
}

#[test]
fn dimensions_of_six_leaf_polytopes() {
    for s in series_fixture().series {
        assert_eq!(
            polytope_dimension(6, &s.face).unwrap(),
            s.denom_exp - 1,
            "{}",
            s.name
        );
    }
    assert_eq!(polytope_dimension(6, &FaceSpec::empty()).unwrap(), 18);
}

#[test]
fn enumerated_values_match_series() {
    let budget = SumsetBudget::default();
    for s in series_fixture().series {
        let got = hilbert_values(6, &s.face, 2, &budget).unwrap();
        let want = expand_series(&s.data(), 2);
        let got: Vec<BigInt> = got.into_iter().map(BigInt::from).collect();
        assert_eq!(got, want, "{}", s.name);
    }
}

#[test]
fn three_leaf_record() {
    let rec = hilbert_record(3, &FaceSpec::empty(), 12, &SumsetBudget::default()).unwrap();
    assert_eq!(rec.dim, 9);
    assert!(rec.h_is_nonnegative());
    assert!(rec.a_invariant < 0);
    let poly = fit_ehrhart(&rec.values, rec.dim).unwrap();
    let leading: BigRational = poly.coeffs[9].clone();
    assert!(leading.is_positive());
    let h1: BigInt = rec.h_numerator.iter().sum();
    assert_eq!(rec.normalized_volume, h1);
}

#[test]
fn first_values_count_vertices() {
    let budget = SumsetBudget::default();
    for n in 2..=4 {
        let face = FaceSpec::empty();
        let v = hilbert_values(n, &face, 1, &budget).unwrap();
        assert_eq!(v[1], 1 << (2 * (n - 1)));
        // Two leaves give only the four points (g, g): a simplex.
        let want = if n == 2 { 3 } else { 3 * n };
        assert_eq!(polytope_dimension(n, &face).unwrap(), want);
    }
    for name in ["P1", "P2", "P3"] {
        let face = FaceSpec::named(name).unwrap();
        let v = hilbert_values(6, &face, 1, &budget).unwrap();
        assert_eq!(
            v[1] as usize,
            kimura_core::group::enumerate_flows(6, &face).unwrap().len()
        );
    }
}

#[test]
fn series_start_with_vertex_counts() {
    let t1: Vec<BigInt> = series_fixture()
        .series
        .iter()
        .map(|s| expand_series(&s.data(), 1)[1].clone())
        .collect();
    assert_eq!(t1, [1024, 512, 576].map(BigInt::from));
}

#[test]
fn reciprocity_zeros() {
    let rec = hilbert_record(3, &FaceSpec::empty(), 12, &SumsetBudget::default()).unwrap();
    let poly = fit_ehrhart(&rec.values, rec.dim).unwrap();
    // Zero at every negative integer strictly above the a-invariant.
    for j in 1..-rec.a_invariant {
        assert!(poly.eval_int(-j).is_zero(), "H(-{j})");
    }
    assert!(!poly.eval_int(rec.a_invariant).is_zero());
    let back = expand_series(
        &SeriesData {
            numerator: rec.h_numerator.clone(),
            denom_exp: rec.dim + 1,
        },
        rec.values.len() - 1,
    );
    assert_eq!(back, rec.values);
}
