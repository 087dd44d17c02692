//! P2 velocity / P1 pressure element kernels on straight triangles.

/// Degree-4 symmetric rule (6 points) on the reference triangle; barycentric
/// coordinates and weights summing to 1.
const QUAD: [([f64; 3], f64); 6] = {
    const A: f64 = 0.445_948_490_915_965;
    const WA: f64 = 0.223_381_589_678_011;
    const B: f64 = 0.091_576_213_509_771;
    const WB: f64 = 0.109_951_743_655_322;
    [
        ([A, A, 1.0 - 2.0 * A], WA),
        ([A, 1.0 - 2.0 * A, A], WA),
        ([1.0 - 2.0 * A, A, A], WA),
        ([B, B, 1.0 - 2.0 * B], WB),
        ([B, 1.0 - 2.0 * B, B], WB),
        ([1.0 - 2.0 * B, B, B], WB),
    ]
};

/// Local P2 node order: vertices 0,1,2 then midpoints of edges 01, 12, 20.
pub const P2_EDGES: [(usize, usize); 3] = [(0, 1), (1, 2), (2, 0)];

/// Element matrices of one triangle.
#[derive(Debug, Clone)]
pub struct ElementMatrices {
    /// ∫ ∂xφᵢ ∂xφⱼ
    pub kxx: [[f64; 6]; 6],
    /// ∫ ∂yφᵢ ∂yφⱼ
    pub kyy: [[f64; 6]; 6],
    /// ∫ φᵢ φⱼ
    pub mass: [[f64; 6]; 6],
    /// −∫ ψₖ ∂xφⱼ
    pub bx: [[f64; 6]; 3],
    /// −∫ ψₖ ∂yφⱼ
    pub by: [[f64; 6]; 3],
    /// ∫ ψₖ ψₗ
    pub pmass: [[f64; 3]; 3],
}

/// Signed area (positive for counter-clockwise vertices).
pub fn signed_area(p: &[[f64; 2]; 3]) -> f64 {
    0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))
}

/// Constant gradients of the barycentric coordinates.
fn barycentric_gradients(p: &[[f64; 2]; 3], area: f64) -> [[f64; 2]; 3] {
    let inv = 0.5 / area;
    [
        [(p[1][1] - p[2][1]) * inv, (p[2][0] - p[1][0]) * inv],
        [(p[2][1] - p[0][1]) * inv, (p[0][0] - p[2][0]) * inv],
        [(p[0][1] - p[1][1]) * inv, (p[1][0] - p[0][0]) * inv],
    ]
}

pub fn p2_values(l: &[f64; 3]) -> [f64; 6] {
    let mut v = [0.0; 6];
    for i in 0..3 {
        v[i] = l[i] * (2.0 * l[i] - 1.0);
    }
    for (k, &(a, b)) in P2_EDGES.iter().enumerate() {
        v[3 + k] = 4.0 * l[a] * l[b];
    }
    v
}

fn p2_gradients(l: &[f64; 3], g: &[[f64; 2]; 3]) -> [[f64; 2]; 6] {
    let mut out = [[0.0; 2]; 6];
    for i in 0..3 {
        let s = 4.0 * l[i] - 1.0;
        out[i] = [s * g[i][0], s * g[i][1]];
    }
    for (k, &(a, b)) in P2_EDGES.iter().enumerate() {
        out[3 + k] = [4.0 * (l[a] * g[b][0] + l[b] * g[a][0]), 4.0 * (l[a] * g[b][1] + l[b] * g[a][1])];
    }
    out
}

/// All element matrices for the triangle with vertices `p` (counter-clockwise).
pub fn element_matrices(p: &[[f64; 2]; 3]) -> ElementMatrices {
    let area = signed_area(p);
    debug_assert!(area > 0.0, "clockwise or degenerate triangle");
    let g = barycentric_gradients(p, area);
    let mut e = ElementMatrices {
        kxx: [[0.0; 6]; 6],
        kyy: [[0.0; 6]; 6],
        mass: [[0.0; 6]; 6],
        bx: [[0.0; 6]; 3],
        by: [[0.0; 6]; 3],
        pmass: [[0.0; 3]; 3],
    };
    for (l, w) in QUAD.iter() {
        let w = w * area;
        let phi = p2_values(l);
        let dphi = p2_gradients(l, &g);
        for i in 0..6 {
            for j in 0..6 {
                e.kxx[i][j] += w * dphi[i][0] * dphi[j][0];
                e.kyy[i][j] += w * dphi[i][1] * dphi[j][1];
                e.mass[i][j] += w * phi[i] * phi[j];
            }
        }
        for k in 0..3 {
            for j in 0..6 {
                e.bx[k][j] -= w * l[k] * dphi[j][0];
                e.by[k][j] -= w * l[k] * dphi[j][1];
            }
            for m in 0..3 {
                e.pmass[k][m] += w * l[k] * l[m];
            }
        }
    }
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const TRI: [[f64; 2]; 3] = [[0.2, 0.1], [1.3, 0.4], [0.5, 1.2]];

    #[test]
    fn partition_of_unity_and_area() {
        let e = element_matrices(&TRI);
        let total: f64 = e.mass.iter().flatten().sum();
        assert_relative_eq!(total, signed_area(&TRI), max_relative = 1e-13);
        let ptotal: f64 = e.pmass.iter().flatten().sum();
        assert_relative_eq!(ptotal, signed_area(&TRI), max_relative = 1e-13);
        for row in e.kxx.iter().chain(e.kyy.iter()) {
            assert!(row.iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn divergence_of_linear_field() {
        // v = (x, 0) interpolated exactly; −∫ψₖ ∂x v = −∫ψₖ = −area/3.
        let e = element_matrices(&TRI);
        let mut nodes = [[0.0; 2]; 6];
        nodes[..3].copy_from_slice(&TRI);
        for (k, &(a, b)) in P2_EDGES.iter().enumerate() {
            nodes[3 + k] = [0.5 * (TRI[a][0] + TRI[b][0]), 0.5 * (TRI[a][1] + TRI[b][1])];
        }
        let area = signed_area(&TRI);
        for k in 0..3 {
            let val: f64 = (0..6).map(|j| e.bx[k][j] * nodes[j][0]).sum();
            assert_relative_eq!(val, -area / 3.0, max_relative = 1e-12);
            let val: f64 = (0..6).map(|j| e.by[k][j] * nodes[j][0]).sum();
            assert!(val.abs() < 1e-13);
        }
    }
}
