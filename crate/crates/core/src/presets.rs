//! Connection presets used by the experiments and the acceptance runs.
//!
//! Every preset is a connection on a trivial bundle over the flat torus,
//! constructed so its qualitative flow behavior is known: flat unitary
//! models converge, the scalar exact model has a closed-form limit, the
//! nilpotent model blows up logarithmically, and the direct sum splits.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::connection::Connection;
use crate::error::NhymError;
use crate::fields::{EndField, OneForm};
use crate::geometry::TorusGeometry;
use crate::random::BandLimited;
use crate::Result;

/// Constant square matrix in configuration files: rows of `[re, im]` pairs.
pub type MatrixSpec = Vec<Vec<(f64, f64)>>;

pub fn parse_matrix(spec: &MatrixSpec) -> Result<(usize, Vec<Complex64>)> {
    let rank = spec.len();
    if rank == 0 {
        return Err(NhymError::Config("matrix spec must not be empty".into()));
    }
    let mut out = Vec::with_capacity(rank * rank);
    for row in spec {
        if row.len() != rank {
            return Err(NhymError::Config(format!(
                "matrix spec is not square: {rank} rows but a row of length {}",
                row.len()
            )));
        }
        for &(re, im) in row {
            if !re.is_finite() || !im.is_finite() {
                return Err(NhymError::Config("matrix spec has non-finite entries".into()));
            }
            out.push(Complex64::new(re, im));
        }
    }
    Ok((rank, out))
}

/// Declarative connection choice, embedded in experiment configurations.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PresetSpec {
    /// `A = B dz_1 - B^* dzbar_1`: unitary up to the normality of `B`.
    UnitaryConst { b: MatrixSpec },
    /// `A = B dz_1`.
    NormalConst { b: MatrixSpec },
    /// `A = B dz_1` with the fixed non-normal `B = [[1, 1], [0, 2]]`.
    NonnormalSimple,
    /// `A = s+ dz_1`, the rank-two nilpotent model.
    Nilpotent,
    /// Rank one, `A = df` for a seeded band-limited real `f`; the harmonic
    /// limit is `exp(2 (f - mean f))` in closed form.
    ScalarExact { max_mode: usize, amplitude: f64, seed: u64 },
    /// Rank one, `A = c dz_1` for a complex constant `c`.
    ScalarCharacter { re: f64, im: f64 },
    /// Block-diagonal direct sum of two presets over the same base.
    BlockSum { first: Box<PresetSpec>, second: Box<PresetSpec> },
    /// Two complex dimensions, `A = s+ dz_1 + s- dzbar_2`: a simple model
    /// with genuinely nonvanishing curvature whose harmonic metric is the
    /// identity.
    NonflatN2,
    /// Constant coefficient matrices given explicitly, one per complex axis.
    Inline { dz: Vec<MatrixSpec>, dzbar: Vec<MatrixSpec> },
}

/// A built preset: the connection plus whatever closed-form data the preset
/// carries (currently the scalar potential of the exact abelian model).
#[derive(Debug, Clone)]
pub struct PresetBuild {
    pub connection: Connection,
    /// Sampled potential `f` with `A = df`, when the preset is gradient.
    pub scalar_potential: Option<Vec<f64>>,
}

pub fn pauli_plus() -> Vec<Complex64> {
    vec![
        Complex64::default(),
        Complex64::new(1.0, 0.0),
        Complex64::default(),
        Complex64::default(),
    ]
}

pub fn pauli_minus() -> Vec<Complex64> {
    vec![
        Complex64::default(),
        Complex64::default(),
        Complex64::new(1.0, 0.0),
        Complex64::default(),
    ]
}

pub fn build(geo: &TorusGeometry, spec: &PresetSpec) -> Result<PresetBuild> {
    let nodes = geo.nodes();
    let n = geo.n();
    let plain = |conn: Connection| PresetBuild { connection: conn, scalar_potential: None };
    match spec {
        PresetSpec::UnitaryConst { b } => {
            let (rank, mat) = parse_matrix(b)?;
            let mut form = OneForm::zeros(n, nodes, rank);
            form.dz[0] = EndField::constant(nodes, rank, &mat);
            form.dzbar[0] = EndField::constant(nodes, rank, &crate::matrix::adjoint(&mat, rank))
                .scale(Complex64::new(-1.0, 0.0));
            Ok(plain(Connection::new(form)?))
        }
        PresetSpec::NormalConst { b } => {
            let (rank, mat) = parse_matrix(b)?;
            let mut form = OneForm::zeros(n, nodes, rank);
            form.dz[0] = EndField::constant(nodes, rank, &mat);
            Ok(plain(Connection::new(form)?))
        }
        PresetSpec::NonnormalSimple => {
            let mat = vec![
                Complex64::new(1.0, 0.0),
                Complex64::new(1.0, 0.0),
                Complex64::default(),
                Complex64::new(2.0, 0.0),
            ];
            let mut form = OneForm::zeros(n, nodes, 2);
            form.dz[0] = EndField::constant(nodes, 2, &mat);
            Ok(plain(Connection::new(form)?))
        }
        PresetSpec::Nilpotent => {
            let mut form = OneForm::zeros(n, nodes, 2);
            form.dz[0] = EndField::constant(nodes, 2, &pauli_plus());
            Ok(plain(Connection::new(form)?))
        }
        PresetSpec::ScalarExact { max_mode, amplitude, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let f = BandLimited::random(geo.axes(), *max_mode, *amplitude, &mut rng);
            let mut form = OneForm::zeros(n, nodes, 1);
            let mut samples = Vec::with_capacity(nodes);
            let mut frac = vec![0.0; geo.axes()];
            for node in 0..nodes {
                for a in 0..geo.axes() {
                    frac[a] = geo.fraction(node, a);
                }
                samples.push(f.eval(&frac));
                for j in 0..n {
                    let fx = f.eval_deriv(&frac, 2 * j, geo.period(2 * j));
                    let fy = f.eval_deriv(&frac, 2 * j + 1, geo.period(2 * j + 1));
                    // d/dz = (d/dx - i d/dy) / 2 and its conjugate
                    form.dz[j].node_mut(node)[0] = Complex64::new(fx / 2.0, -fy / 2.0);
                    form.dzbar[j].node_mut(node)[0] = Complex64::new(fx / 2.0, fy / 2.0);
                }
            }
            Ok(PresetBuild {
                connection: Connection::new(form)?,
                scalar_potential: Some(samples),
            })
        }
        PresetSpec::ScalarCharacter { re, im } => {
            let mut form = OneForm::zeros(n, nodes, 1);
            form.dz[0] = EndField::constant(nodes, 1, &[Complex64::new(*re, *im)]);
            Ok(plain(Connection::new(form)?))
        }
        PresetSpec::BlockSum { first, second } => {
            let a = build(geo, first)?;
            let b = build(geo, second)?;
            let ra = a.connection.rank();
            let rb = b.connection.rank();
            let rank = ra + rb;
            let mut form = OneForm::zeros(n, nodes, rank);
            for j in 0..n {
                embed_block(&mut form.dz[j], &a.connection.form.dz[j], 0, rank);
                embed_block(&mut form.dz[j], &b.connection.form.dz[j], ra, rank);
                embed_block(&mut form.dzbar[j], &a.connection.form.dzbar[j], 0, rank);
                embed_block(&mut form.dzbar[j], &b.connection.form.dzbar[j], ra, rank);
            }
            Ok(plain(Connection::new(form)?))
        }
        PresetSpec::NonflatN2 => {
            if n != 2 {
                return Err(NhymError::Config(format!(
                    "the curved two-dimensional preset needs n = 2, got n = {n}"
                )));
            }
            let mut form = OneForm::zeros(n, nodes, 2);
            form.dz[0] = EndField::constant(nodes, 2, &pauli_plus());
            form.dzbar[1] = EndField::constant(nodes, 2, &pauli_minus());
            Ok(plain(Connection::new(form)?))
        }
        PresetSpec::Inline { dz, dzbar } => {
            if dz.len() != n || dzbar.len() != n {
                return Err(NhymError::Config(format!(
                    "inline connection needs {n} dz and dzbar matrices, got {} and {}",
                    dz.len(),
                    dzbar.len()
                )));
            }
            let (rank, first) = parse_matrix(&dz[0])?;
            let mut form = OneForm::zeros(n, nodes, rank);
            form.dz[0] = EndField::constant(nodes, rank, &first);
            for j in 1..n {
                let (r, mat) = parse_matrix(&dz[j])?;
                if r != rank {
                    return Err(NhymError::Config("inline matrices disagree on rank".into()));
                }
                form.dz[j] = EndField::constant(nodes, rank, &mat);
            }
            for j in 0..n {
                let (r, mat) = parse_matrix(&dzbar[j])?;
                if r != rank {
                    return Err(NhymError::Config("inline matrices disagree on rank".into()));
                }
                form.dzbar[j] = EndField::constant(nodes, rank, &mat);
            }
            Ok(plain(Connection::new(form)?))
        }
    }
}

fn embed_block(target: &mut EndField, source: &EndField, offset: usize, rank: usize) {
    let r = source.rank();
    for node in 0..source.nodes() {
        for i in 0..r {
            for j in 0..r {
                let v = source.node(node)[i * r + j];
                target.node_mut(node)[(offset + i) * rank + (offset + j)] = v;
            }
        }
    }
}

/// Names and one-line descriptions for the command line listing.
pub fn catalog() -> Vec<(&'static str, &'static str)> {
    vec![
        ("unitary_const", "constant B dz - B* dzbar; flat and unitary when B is normal"),
        ("normal_const", "constant B dz; flat, semisimple for diagonalizable B"),
        ("nonnormal_simple", "constant upper-triangular B dz with distinct eigenvalues"),
        ("nilpotent", "constant s+ dz; the flow blows up logarithmically"),
        ("scalar_exact", "rank one A = df; harmonic limit exp(2(f - mean f))"),
        ("scalar_character", "rank one constant c dz; harmonic metrics are constant"),
        ("block_sum", "diagonal direct sum of two presets"),
        ("nonflat_n2", "n = 2 curved model s+ dz_1 + s- dzbar_2 with identity harmonic metric"),
        ("inline", "explicit constant coefficient matrices"),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connection::{curvature_of, validate_nhym};
    use crate::geometry::{Scheme, SpectralEngine};

    fn geo1(size: usize) -> TorusGeometry {
        TorusGeometry::square(1, size, 1.0).unwrap()
    }

    #[test]
    fn scalar_exact_is_flat_to_machine_precision() {
        let geo = geo1(32);
        let eng = SpectralEngine::new(geo.clone(), Scheme::Spectral);
        let built = build(
            &geo,
            &PresetSpec::ScalarExact { max_mode: 2, amplitude: 0.4, seed: 9 },
        )
        .unwrap();
        let cert = validate_nhym(&eng, &built.connection);
        assert!(cert.res_f20 < 1e-10, "f20 {}", cert.res_f20);
        assert!(cert.res_f02 < 1e-10);
        assert!(cert.res_einstein < 1e-10);
        assert!(built.scalar_potential.is_some());
    }

    #[test]
    fn gradient_preset_matches_spectral_gradient() {
        let geo = geo1(32);
        let eng = SpectralEngine::new(geo.clone(), Scheme::Spectral);
        let built = build(
            &geo,
            &PresetSpec::ScalarExact { max_mode: 2, amplitude: 0.4, seed: 5 },
        )
        .unwrap();
        let f: Vec<Complex64> = built
            .scalar_potential
            .as_ref()
            .unwrap()
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        let want = eng.dz(&f, 0);
        let got = &built.connection.form.dz[0];
        for node in 0..geo.nodes() {
            assert!((got.node(node)[0] - want[node]).norm() < 1e-11);
        }
    }

    #[test]
    fn block_sum_embeds_blocks() {
        let geo = geo1(8);
        let spec = PresetSpec::BlockSum {
            first: Box::new(PresetSpec::Nilpotent),
            second: Box::new(PresetSpec::ScalarCharacter { re: 0.5, im: 0.0 }),
        };
        let built = build(&geo, &spec).unwrap();
        assert_eq!(built.connection.rank(), 3);
        let dz = built.connection.form.dz[0].node(0);
        assert!((dz[0 * 3 + 1].re - 1.0).abs() < 1e-15); // s+ block
        assert!((dz[2 * 3 + 2].re - 0.5).abs() < 1e-15); // character block
        assert!(dz[0 * 3 + 2].norm() < 1e-15);
    }

    #[test]
    fn curved_preset_has_the_expected_curvature() {
        let geo = TorusGeometry::square(2, 4, 1.0).unwrap();
        let eng = SpectralEngine::new(geo.clone(), Scheme::Spectral);
        let built = build(&geo, &PresetSpec::NonflatN2).unwrap();
        let f = curvature_of(&eng, &built.connection.form);
        // single nonzero block: dz_1 ^ dzbar_2 slot holds [s+, s-] = s3
        let m = f.mixed(0, 1).node(0);
        assert!((m[0].re - 1.0).abs() < 1e-13);
        assert!((m[3].re + 1.0).abs() < 1e-13);
        assert!(f.mixed(0, 0).sup_frobenius() < 1e-13);
        assert!(f.mixed(1, 1).sup_frobenius() < 1e-13);
        let cert = validate_nhym(&eng, &built.connection);
        assert!(cert.res_f20 < 1e-13 && cert.res_f02 < 1e-13 && cert.res_einstein < 1e-13);
    }

    #[test]
    fn preset_spec_round_trips_through_json() {
        let spec = PresetSpec::BlockSum {
            first: Box::new(PresetSpec::UnitaryConst {
                b: vec![vec![(0.0, 0.0), (1.0, 0.0)], vec![(1.0, 0.0), (0.0, 0.0)]],
            }),
            second: Box::new(PresetSpec::ScalarExact { max_mode: 2, amplitude: 0.3, seed: 1 }),
        };
        let text = serde_json::to_string(&spec).unwrap();
        let back: PresetSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn inline_rejects_mismatched_shapes() {
        let geo = geo1(8);
        let bad = PresetSpec::Inline {
            dz: vec![vec![vec![(1.0, 0.0), (0.0, 0.0)], vec![(0.0, 0.0), (1.0, 0.0)]]],
            dzbar: vec![vec![vec![(1.0, 0.0)]]],
        };
        assert!(build(&geo, &bad).is_err());
    }
}
