//! Quadrature rules on the reference triangle and the reference edge.
//!
//! Triangle points are stored in barycentric coordinates; weights sum to the
//! reference measure (1/2 for the triangle, 1 for the unit interval). All
//! rules have strictly positive weights.

/// Symmetric Gauss rule on the reference triangle.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    /// Barycentric coordinates (l0, l1, l2) of each point.
    pub points: Vec<[f64; 3]>,
    /// Weights summing to 1/2.
    pub weights: Vec<f64>,
    /// All polynomials up to this total degree are integrated exactly.
    pub exactness_degree: usize,
}

impl QuadratureRule {
    /// Smallest available rule with exactness at least `min_degree`.
    ///
    /// Available exactness degrees: 1, 2, 4, 6 (the degree-3 family with
    /// positive weights is already the degree-4 rule).
    pub fn triangle(min_degree: usize) -> QuadratureRule {
        match min_degree {
            0 | 1 => QuadratureRule {
                points: vec![[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]],
                weights: vec![0.5],
                exactness_degree: 1,
            },
            2 => {
                let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
                QuadratureRule {
                    points: perm3(a, b),
                    weights: vec![1.0 / 6.0; 3],
                    exactness_degree: 2,
                }
            }
            3 | 4 => {
                // Six-point rule, exact to degree 4.
                let mut points = perm3(0.108_103_018_168_070, 0.445_948_490_915_965);
                points.extend(perm3(0.816_847_572_980_459, 0.091_576_213_509_771));
                let mut weights = vec![0.223_381_589_678_011 / 2.0; 3];
                weights.extend(vec![0.109_951_743_655_322 / 2.0; 3]);
                QuadratureRule {
                    points,
                    weights,
                    exactness_degree: 4,
                }
            }
            5 | 6 => {
                // Twelve-point rule, exact to degree 6.
                let mut points = perm3(0.501_426_509_658_179, 0.249_286_745_170_910);
                points.extend(perm3(0.873_821_971_016_996, 0.063_089_014_491_502));
                points.extend(perm3_full(
                    0.053_145_049_844_816,
                    0.310_352_451_033_785,
                    0.636_502_499_121_399,
                ));
                let mut weights = vec![0.116_786_275_726_379 / 2.0; 3];
                weights.extend(vec![0.050_844_906_370_207 / 2.0; 3]);
                weights.extend(vec![0.082_851_075_618_374 / 2.0; 6]);
                QuadratureRule {
                    points,
                    weights,
                    exactness_degree: 6,
                }
            }
            _ => {
                // Collapsed tensor-Gauss (Duffy) rule: x = u, y = v (1 - u)
                // with Jacobian (1 - u). An n-point Gauss leg integrates
                // u-degree a+b+1 and v-degree b, so 5 x 5 points are exact
                // to total degree 8.
                assert!(min_degree <= 8, "no triangle rule beyond degree 8");
                let gauss = EdgeRule::gauss(9);
                let mut points = Vec::with_capacity(gauss.len() * gauss.len());
                let mut weights = Vec::with_capacity(gauss.len() * gauss.len());
                for (&u, &wu) in gauss.points.iter().zip(&gauss.weights) {
                    for (&v, &wv) in gauss.points.iter().zip(&gauss.weights) {
                        let (x, y) = (u, v * (1.0 - u));
                        points.push([1.0 - x - y, x, y]);
                        weights.push(wu * wv * (1.0 - u));
                    }
                }
                QuadratureRule {
                    points,
                    weights,
                    exactness_degree: 8,
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Gauss-Legendre rule on the reference edge [0, 1].
#[derive(Debug, Clone)]
pub struct EdgeRule {
    /// Parameters in [0, 1].
    pub points: Vec<f64>,
    /// Weights summing to 1.
    pub weights: Vec<f64>,
    pub exactness_degree: usize,
}

impl EdgeRule {
    /// Smallest Gauss-Legendre rule with exactness at least `min_degree`
    /// (an n-point rule is exact to degree 2n - 1; n up to 5 is provided).
    pub fn gauss(min_degree: usize) -> EdgeRule {
        let n = min_degree / 2 + 1;
        // Nodes/weights on [-1, 1].
        let (nodes, weights): (Vec<f64>, Vec<f64>) = match n {
            1 => (vec![0.0], vec![2.0]),
            2 => {
                let a = 1.0 / 3.0_f64.sqrt();
                (vec![-a, a], vec![1.0, 1.0])
            }
            3 => {
                let a = (3.0 / 5.0_f64).sqrt();
                (vec![-a, 0.0, a], vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
            }
            4 => (
                vec![
                    -0.861_136_311_594_052_6,
                    -0.339_981_043_584_856_3,
                    0.339_981_043_584_856_3,
                    0.861_136_311_594_052_6,
                ],
                vec![
                    0.347_854_845_137_453_86,
                    0.652_145_154_862_546_1,
                    0.652_145_154_862_546_1,
                    0.347_854_845_137_453_86,
                ],
            ),
            5 => (
                vec![
                    -0.906_179_845_938_664,
                    -0.538_469_310_105_683,
                    0.0,
                    0.538_469_310_105_683,
                    0.906_179_845_938_664,
                ],
                vec![
                    0.236_926_885_056_189_09,
                    0.478_628_670_499_366_47,
                    0.568_888_888_888_888_9,
                    0.478_628_670_499_366_47,
                    0.236_926_885_056_189_09,
                ],
            ),
            _ => panic!("no edge rule beyond degree 9"),
        };
        EdgeRule {
            points: nodes.iter().map(|x| 0.5 * (x + 1.0)).collect(),
            weights: weights.iter().map(|w| 0.5 * w).collect(),
            exactness_degree: 2 * n - 1,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// The three cyclic placements of (a, b, b).
fn perm3(a: f64, b: f64) -> Vec<[f64; 3]> {
    vec![[a, b, b], [b, a, b], [b, b, a]]
}

/// All six permutations of (a, b, c).
fn perm3_full(a: f64, b: f64, c: f64) -> Vec<[f64; 3]> {
    vec![
        [a, b, c],
        [a, c, b],
        [b, a, c],
        [b, c, a],
        [c, a, b],
        [c, b, a],
    ]
}
