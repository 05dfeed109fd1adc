//! Diffusion test problems.
//!
//! Both generators discretize `-div(K grad u)` with the constant coefficient
//! matrix `K = [[c1, c3], [c3, c2]]` and homogeneous Dirichlet boundary
//! conditions; boundary unknowns are eliminated. Matrices are assembled
//! without the `1/h^2` factor.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Default number of node layers of the disc mesh (n = 2437 interior nodes).
pub const DEFAULT_CIRCLE_RINGS: usize = 30;
/// Interior grid side of the square cases (n = 2025).
pub const DEFAULT_SQUARE_SIDE: usize = 45;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionCoefficients {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl DiffusionCoefficients {
    pub const ISO: Self = Self { c1: 1.0, c2: 1.0, c3: 0.0 };
    pub const ANISO: Self = Self { c1: 1.0, c2: 1e-2, c3: 0.0 };

    pub fn new(c1: f64, c2: f64, c3: f64) -> Result<Self> {
        let c = Self { c1, c2, c3 };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.c1 > 0.0 && self.c1 * self.c2 - self.c3 * self.c3 > 0.0 {
            Ok(())
        } else {
            Err(Error::NotPositiveDefinite)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CaseLabel {
    SIso,
    SAniso,
    CIso,
    CAniso,
    External,
}

impl CaseLabel {
    pub const BUILTIN: [CaseLabel; 4] = [Self::SIso, Self::SAniso, Self::CIso, Self::CAniso];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::SIso => "s-iso",
            Self::SAniso => "s-aniso",
            Self::CIso => "c-iso",
            Self::CAniso => "c-aniso",
            Self::External => "external",
        }
    }

    pub fn is_anisotropic(&self) -> bool {
        matches!(self, Self::SAniso | Self::CAniso)
    }

    pub fn is_square(&self) -> bool {
        matches!(self, Self::SIso | Self::SAniso)
    }

    /// Generates the built-in problem at its default size.
    pub fn generate(&self) -> Result<ProblemInstance> {
        match self {
            Self::SIso => generate_fd_square(DEFAULT_SQUARE_SIDE, DiffusionCoefficients::ISO),
            Self::SAniso => {
                let mut p = generate_fd_square(DEFAULT_SQUARE_SIDE, DiffusionCoefficients::ANISO)?;
                p.label = Self::SAniso;
                Ok(p)
            }
            Self::CIso => generate_fem_circle(DEFAULT_CIRCLE_RINGS, DiffusionCoefficients::ISO),
            Self::CAniso => {
                let mut p = generate_fem_circle(DEFAULT_CIRCLE_RINGS, DiffusionCoefficients::ANISO)?;
                p.label = Self::CAniso;
                Ok(p)
            }
            Self::External => Err(Error::InvalidArgument(
                "external problems are loaded, not generated".into(),
            )),
        }
    }
}

impl fmt::Display for CaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CaseLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "s-iso" => Ok(Self::SIso),
            "s-aniso" => Ok(Self::SAniso),
            "c-iso" => Ok(Self::CIso),
            "c-aniso" => Ok(Self::CAniso),
            "external" => Ok(Self::External),
            _ => Err(Error::InvalidArgument(format!("unknown case '{s}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub matrix: SparseMatrix,
    pub coords: Option<Vec<[f64; 2]>>,
    pub label: CaseLabel,
}

impl ProblemInstance {
    pub fn n(&self) -> usize {
        self.matrix.n()
    }
}

fn label_for(square: bool, coeffs: &DiffusionCoefficients) -> CaseLabel {
    let iso = coeffs.c1 == coeffs.c2 && coeffs.c3 == 0.0;
    match (square, iso) {
        (true, true) => CaseLabel::SIso,
        (true, false) => CaseLabel::SAniso,
        (false, true) => CaseLabel::CIso,
        (false, false) => CaseLabel::CAniso,
    }
}

/// Finite differences on the `m x m` interior grid of the unit square.
///
/// Unknown `k = j*m + i` sits at `((i+1)h, (j+1)h)`, `h = 1/(m+1)`, so `c1`
/// couples neighbours within a grid row and `c2` across rows. The mixed
/// term uses the four-corner cross stencil with `-c3/2` on the
/// (+,+)/(-,-) diagonals and `+c3/2` on the others.
pub fn generate_fd_square(m: usize, coeffs: DiffusionCoefficients) -> Result<ProblemInstance> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!("grid side must be >= 2, got {m}")));
    }
    coeffs.validate()?;
    let DiffusionCoefficients { c1, c2, c3 } = coeffs;
    let n = m * m;
    let h = 1.0 / (m as f64 + 1.0);
    let idx = |i: usize, j: usize| j * m + i;

    let stencil: [(isize, isize, f64); 9] = [
        (0, 0, 2.0 * c1 + 2.0 * c2),
        (-1, 0, -c1),
        (1, 0, -c1),
        (0, -1, -c2),
        (0, 1, -c2),
        (1, 1, -0.5 * c3),
        (-1, -1, -0.5 * c3),
        (1, -1, 0.5 * c3),
        (-1, 1, 0.5 * c3),
    ];

    let mut triplets = Vec::with_capacity(9 * n);
    for j in 0..m {
        for i in 0..m {
            for &(di, dj, v) in &stencil {
                if v == 0.0 {
                    continue;
                }
                let (ii, jj) = (i as isize + di, j as isize + dj);
                if ii < 0 || jj < 0 || ii >= m as isize || jj >= m as isize {
                    continue;
                }
                triplets.push((idx(i, j), idx(ii as usize, jj as usize), v));
            }
        }
    }
    let matrix = SparseMatrix::from_triplets(n, n, triplets);
    let coords = (0..n)
        .map(|k| [((k % m) as f64 + 1.0) * h, ((k / m) as f64 + 1.0) * h])
        .collect();
    Ok(ProblemInstance {
        matrix,
        coords: Some(coords),
        label: label_for(true, &coeffs),
    })
}

/// Node coordinates and triangles of the structured polar disc mesh.
///
/// Layer `r` (`0 <= r < rings`) lies on the circle of radius `r/(rings-1)`
/// and carries `6r` equally spaced nodes (one centre node for `r = 0`).
/// Consecutive layers are stitched by merging their nodes by angle.
#[derive(Debug, Clone)]
pub struct DiscMesh {
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    /// First node index of each layer; the last layer is the boundary.
    pub layer_start: Vec<usize>,
}

impl DiscMesh {
    pub fn new(rings: usize) -> Result<Self> {
        if rings < 2 {
            return Err(Error::InvalidArgument(format!("rings must be >= 2, got {rings}")));
        }
        let outer = (rings - 1) as f64;
        let mut nodes = vec![[0.0, 0.0]];
        let mut layer_start = vec![0];
        for r in 1..rings {
            layer_start.push(nodes.len());
            let count = 6 * r;
            let radius = r as f64 / outer;
            for k in 0..count {
                let t = 2.0 * PI * k as f64 / count as f64;
                nodes.push([radius * t.cos(), radius * t.sin()]);
            }
        }
        layer_start.push(nodes.len());

        let mut triangles = Vec::new();
        for k in 0..6 {
            triangles.push([0, 1 + k, 1 + (k + 1) % 6]);
        }
        for r in 2..rings {
            let (a0, na) = (layer_start[r - 1], 6 * (r - 1));
            let (b0, nb) = (layer_start[r], 6 * r);
            let angle = |k: usize, len: usize| 2.0 * PI * k as f64 / len as f64;
            let (mut i, mut j) = (0, 0);
            while i < na || j < nb {
                let advance_inner = i < na && (j == nb || angle(i + 1, na) < angle(j + 1, nb));
                if advance_inner {
                    triangles.push([a0 + (i + 1) % na, a0 + i, b0 + j % nb]);
                    i += 1;
                } else {
                    triangles.push([a0 + i % na, b0 + j, b0 + (j + 1) % nb]);
                    j += 1;
                }
            }
        }
        Ok(Self {
            nodes,
            triangles,
            layer_start,
        })
    }

    pub fn boundary_start(&self) -> usize {
        self.layer_start[self.layer_start.len() - 2]
    }
}

/// Signed area and P1 basis-gradient numerators `(b_k, c_k)` of a triangle;
/// `grad phi_k = (b_k, c_k) / (2 * area)`.
fn p1_gradients(p: [[f64; 2]; 3]) -> (f64, [[f64; 2]; 3]) {
    let mut g = [[0.0; 2]; 3];
    for k in 0..3 {
        let (a, b) = (p[(k + 1) % 3], p[(k + 2) % 3]);
        g[k] = [a[1] - b[1], b[0] - a[0]];
    }
    let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
    (area, g)
}

/// P1 element stiffness matrix for coefficient matrix `coeffs`.
pub fn p1_element_stiffness(p: [[f64; 2]; 3], coeffs: &DiffusionCoefficients) -> Result<[[f64; 3]; 3]> {
    let (area, g) = p1_gradients(p);
    let area = area.abs();
    if area < 1e-14 {
        return Err(Error::DegenerateTriangle(0, area));
    }
    let DiffusionCoefficients { c1, c2, c3 } = *coeffs;
    let mut ke = [[0.0; 3]; 3];
    for k in 0..3 {
        for l in 0..3 {
            let (bk, ck) = (g[k][0], g[k][1]);
            let (bl, cl) = (g[l][0], g[l][1]);
            ke[k][l] = (c1 * bk * bl + c2 * ck * cl + c3 * (bk * cl + ck * bl)) / (4.0 * area);
        }
    }
    Ok(ke)
}

/// Linear finite elements on the structured polar disc mesh with `rings`
/// node layers; `n = 1 + 3(rings-1)(rings-2)`.
pub fn generate_fem_circle(rings: usize, coeffs: DiffusionCoefficients) -> Result<ProblemInstance> {
    coeffs.validate()?;
    let mesh = DiscMesh::new(rings)?;
    let n = mesh.boundary_start();

    // BTreeMap keeps (i, j) and (j, i) sums in the same element order,
    // so the assembled values are bitwise symmetric.
    let mut entries: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let p = [mesh.nodes[tri[0]], mesh.nodes[tri[1]], mesh.nodes[tri[2]]];
        let ke = p1_element_stiffness(p, &coeffs).map_err(|e| match e {
            Error::DegenerateTriangle(_, a) => Error::DegenerateTriangle(t, a),
            other => other,
        })?;
        for (k, &gi) in tri.iter().enumerate() {
            for (l, &gj) in tri.iter().enumerate() {
                if gi < n && gj < n {
                    *entries.entry((gi, gj)).or_insert(0.0) += ke[k][l];
                }
            }
        }
    }
    let diag_max = entries
        .iter()
        .filter(|((i, j), _)| i == j)
        .fold(0.0f64, |m, (_, v)| m.max(v.abs()));
    // cancellation leaves roundoff-sized couplings across right angles
    let drop_tol = 1e-13 * diag_max;
    let matrix = SparseMatrix::from_triplets(
        n,
        n,
        entries
            .into_iter()
            .filter(|&((i, j), v)| i == j || v.abs() > drop_tol)
            .map(|((i, j), v)| (i, j, v)),
    );
    Ok(ProblemInstance {
        matrix,
        coords: Some(mesh.nodes[..n].to_vec()),
        label: label_for(false, &coeffs),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn smallest_laplacian() {
        let p = generate_fd_square(2, DiffusionCoefficients::ISO).unwrap();
        let d = p.matrix.to_dense();
        #[rustfmt::skip]
        let expect = DMatrix::from_row_slice(4, 4, &[
             4.0, -1.0, -1.0,  0.0,
            -1.0,  4.0,  0.0, -1.0,
            -1.0,  0.0,  4.0, -1.0,
             0.0, -1.0, -1.0,  4.0,
        ]);
        assert_eq!(d, expect);
    }

    #[test]
    fn s_iso_five_point_rows() {
        let p = generate_fd_square(45, DiffusionCoefficients::ISO).unwrap();
        assert_eq!(p.n(), 2025);
        assert_eq!(p.label, CaseLabel::SIso);
        let k = 20 * 45 + 20;
        let (cols, vals) = p.matrix.row(k);
        assert_eq!(cols, &[k - 45, k - 1, k, k + 1, k + 45]);
        assert_eq!(vals, &[-1.0, -1.0, 4.0, -1.0, -1.0]);
    }

    #[test]
    fn anisotropic_row_sums_match_stencil_enumeration() {
        let m = 45;
        let c = DiffusionCoefficients::ANISO;
        let p = generate_fd_square(m, c).unwrap();
        for j in 1..m - 1 {
            for i in 1..m - 1 {
                let k = j * m + i;
                // oracle: enumerate the five stencil offsets directly
                let mut oracle = 0.0;
                for (di, dj) in [(0i32, 0i32), (-1, 0), (1, 0), (0, -1), (0, 1)] {
                    let col = ((j as i32 + dj) * m as i32 + i as i32 + di) as usize;
                    oracle += p.matrix.get(k, col);
                }
                let (_, vals) = p.matrix.row(k);
                let sum: f64 = vals.iter().sum();
                assert!(sum.abs() < 1e-12 && oracle.abs() < 1e-12);
                assert_eq!(p.matrix.get(k, k - m), -1e-2);
                assert_eq!(p.matrix.get(k, k - 1), -1.0);
                assert_eq!(p.matrix.get(k, k), 2.0 + 2e-2);
            }
        }
    }

    #[test]
    fn mixed_term_stencil() {
        let c = DiffusionCoefficients::new(1.0, 1.0, 0.4).unwrap();
        let p = generate_fd_square(4, c).unwrap();
        let k = 4 + 1;
        assert_eq!(p.matrix.get(k, k + 4 + 1), -0.2);
        assert_eq!(p.matrix.get(k, k - 4 + 1), 0.2);
        assert!(p.matrix.check_system().is_ok());
    }

    #[test]
    fn rejects_indefinite_coefficients() {
        assert!(matches!(
            generate_fd_square(4, DiffusionCoefficients { c1: 1.0, c2: 1.0, c3: 1.0 }),
            Err(Error::NotPositiveDefinite)
        ));
        assert!(DiffusionCoefficients::new(-1.0, 1.0, 0.0).is_err());
        assert!(generate_fd_square(1, DiffusionCoefficients::ISO).is_err());
    }

    #[test]
    fn fd_is_m_matrix_and_deterministic() {
        let a = generate_fd_square(12, DiffusionCoefficients::ANISO).unwrap();
        let b = generate_fd_square(12, DiffusionCoefficients::ANISO).unwrap();
        assert_eq!(a.matrix, b.matrix);
        for i in 0..a.n() {
            let (cols, vals) = a.matrix.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                assert!(if i == j { v > 0.0 } else { v < 0.0 });
            }
        }
    }

    #[test]
    fn disc_sizes() {
        for rings in [2, 3, 10, 30, 31] {
            let mesh = DiscMesh::new(rings).unwrap();
            assert_eq!(mesh.boundary_start(), 1 + 3 * (rings - 1) * (rings - 2));
            // triangles = 6 + sum over layers of (6(r-1) + 6r)
            let expect: usize = 6 + (2..rings).map(|r| 12 * r - 6).sum::<usize>();
            assert_eq!(mesh.triangles.len(), expect);
        }
        let n = generate_fem_circle(DEFAULT_CIRCLE_RINGS, DiffusionCoefficients::ISO).unwrap().n();
        assert!((2400..=2700).contains(&n), "n = {n}");
    }

    #[test]
    fn disc_triangles_cover_the_disc() {
        let mesh = DiscMesh::new(8).unwrap();
        let area: f64 = mesh
            .triangles
            .iter()
            .map(|t| p1_gradients([mesh.nodes[t[0]], mesh.nodes[t[1]], mesh.nodes[t[2]]]).0)
            .inspect(|a| assert!(*a > 0.0, "triangles are counter-clockwise"))
            .sum();
        // inscribed polygon area of the boundary layer
        let nb = 6.0 * 7.0;
        let polygon = 0.5 * nb * (2.0 * PI / nb).sin();
        assert!((area - polygon).abs() < 1e-12);
    }

    #[test]
    fn single_interior_node_matches_per_element_oracle() {
        let p = generate_fem_circle(2, DiffusionCoefficients::ISO).unwrap();
        assert_eq!(p.n(), 1);
        // oracle: each triangle contributes |grad phi_center|^2 * area, with
        // the gradient obtained from the plane through (center=1, others=0)
        let mut oracle = 0.0;
        for k in 0..6 {
            let t0 = 2.0 * PI * k as f64 / 6.0;
            let t1 = 2.0 * PI * (k + 1) as f64 / 6.0;
            let (x1, y1, x2, y2) = (t0.cos(), t0.sin(), t1.cos(), t1.sin());
            let m = nalgebra::Matrix3::new(0.0, 0.0, 1.0, x1, y1, 1.0, x2, y2, 1.0);
            let coef = m.lu().solve(&nalgebra::Vector3::new(1.0, 0.0, 0.0)).unwrap();
            let area = 0.5 * (x1 * y2 - x2 * y1).abs();
            oracle += (coef[0] * coef[0] + coef[1] * coef[1]) * area;
        }
        assert!((p.matrix.get(0, 0) - oracle).abs() < 1e-12);
    }

    #[test]
    fn fem_symmetric_and_spd() {
        for c in [DiffusionCoefficients::ISO, DiffusionCoefficients::ANISO] {
            let p = generate_fem_circle(10, c).unwrap();
            assert!(p.matrix.is_symmetric(1e-12));
            assert!(p.matrix.check_system().is_ok());
            assert!(p.matrix.to_dense().cholesky().is_some());
        }
    }
}
