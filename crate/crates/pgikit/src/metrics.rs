//! Representation-quality metrics: geometry fidelity, pixel redundancy, and
//! neighborhood consistency between a cloud and its planar embedding.

use std::collections::HashSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::geom::{dist2, dist2_2d, PlanarEmbedding, PointCloud};
use crate::resample::Pgi;

/// How much of the input survived resampling, and at what pixel overhead.
#[derive(Debug, Clone, PartialEq)]
pub struct FidelityReport {
    pub n_input: usize,
    /// Distinct input ids present among the image pixels.
    pub n_captured: usize,
    /// `n_captured / n_input`.
    pub fidelity: f64,
    /// `m^2 / n_input - 1`, the fractional excess of pixels over points.
    pub redundancy: f64,
}

impl fmt::Display for FidelityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "n_input={}", self.n_input)?;
        writeln!(f, "n_captured={}", self.n_captured)?;
        writeln!(f, "fidelity={}", self.fidelity)?;
        write!(f, "redundancy={}", self.redundancy)
    }
}

/// Mean overlap between 2D-embedding neighborhoods and (relaxed) 3D
/// neighborhoods.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    pub j: usize,
    pub j_bar: usize,
    pub value: f64,
}

impl fmt::Display for ConsistencyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "consistency_j={}", self.j)?;
        writeln!(f, "consistency_jbar={}", self.j_bar)?;
        write!(f, "consistency={}", self.value)
    }
}

/// Pixel redundancy of an `m x m` image over `n_points` input points.
pub fn redundancy(m: usize, n_points: usize) -> f64 {
    (m * m) as f64 / n_points as f64 - 1.0
}

/// Counts the distinct input source ids captured by the image pixels.
/// Provenance-exact: ids, not coordinates, decide what was captured, and a
/// pixel id missing from the input is an error.
pub fn geometry_fidelity(pc: &PointCloud, pgi: &Pgi) -> Result<FidelityReport> {
    let input_ids: HashSet<u32> = pc.source_ids().iter().copied().collect();
    let mut captured = HashSet::new();
    for &id in pgi.source_ids() {
        if !input_ids.contains(&id) {
            return Err(Error::invalid_input(format!(
                "pixel source id {id} does not exist in the input cloud"
            )));
        }
        captured.insert(id);
    }
    let n_input = pc.len();
    let n_captured = captured.len();
    Ok(FidelityReport {
        n_input,
        n_captured,
        fidelity: n_captured as f64 / n_input as f64,
        redundancy: redundancy(pgi.m(), n_input),
    })
}

/// For each point `i`: the pre-images of its `j` nearest embedding
/// neighbors, intersected with its `j_bar` nearest 3D neighbors (the query
/// point itself excluded from both sets), averaged over all points.
pub fn neighborhood_consistency(
    p_g: &PointCloud,
    f_g: &PlanarEmbedding,
    j: usize,
    j_bar: usize,
) -> Result<ConsistencyReport> {
    let n = p_g.len();
    if f_g.len() != n {
        return Err(Error::invalid_argument(format!(
            "cloud size {n} does not match embedding size {}",
            f_g.len()
        )));
    }
    if j == 0 || j > j_bar || j_bar > n - 1 {
        return Err(Error::invalid_argument(format!(
            "need 1 <= J <= Jbar <= {} (got J={j}, Jbar={j_bar})",
            n - 1
        )));
    }

    let neighbors = |dists: &mut Vec<(f64, usize)>, take: usize| -> Vec<usize> {
        dists.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        dists[..take].iter().map(|&(_, i)| i).collect()
    };

    let mut total = 0.0;
    for i in 0..n {
        let mut d2d: Vec<(f64, usize)> = (0..n)
            .filter(|&jx| jx != i)
            .map(|jx| (dist2_2d(&f_g.coords()[i], &f_g.coords()[jx]), jx))
            .collect();
        let omega = neighbors(&mut d2d, j);

        let mut d3d: Vec<(f64, usize)> = (0..n)
            .filter(|&jx| jx != i)
            .map(|jx| (dist2(&p_g.point(i), &p_g.point(jx)), jx))
            .collect();
        let omega_bar: HashSet<usize> = neighbors(&mut d3d, j_bar).into_iter().collect();

        let overlap = omega.iter().filter(|x| omega_bar.contains(x)).count();
        total += overlap as f64 / j as f64;
    }

    Ok(ConsistencyReport {
        j,
        j_bar,
        value: total / n as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Lattice;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn redundancy_formula() {
        assert!((redundancy(240, 10000) - 4.76).abs() < 5e-3);
        assert!((redundancy(80, 1024) - 5.25).abs() < 1e-12);
    }

    #[test]
    fn planar_identity_flattening_is_fully_consistent() {
        // Coplanar points flattened by dropping z: both neighbor searches
        // happen in isometric spaces, so every overlap is perfect.
        let lattice = Lattice::new(5).unwrap();
        let pts: Vec<[f64; 3]> = lattice.coords().iter().map(|c| [c[0], c[1], 0.0]).collect();
        let pc = PointCloud::from_points(pts).unwrap();
        let emb =
            PlanarEmbedding::new(lattice.coords().to_vec(), pc.source_ids().to_vec()).unwrap();
        for (j, jb) in [(3, 3), (8, 8), (4, 12)] {
            let rep = neighborhood_consistency(&pc, &emb, j, jb).unwrap();
            assert_eq!(rep.value, 1.0, "J={j} Jbar={jb}");
        }
    }

    #[test]
    fn consistency_monotone_in_jbar_and_full_at_max() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let n = 64;
        let pc = PointCloud::from_points(
            (0..n)
                .map(|_| {
                    [
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    ]
                })
                .collect(),
        )
        .unwrap();
        let emb = PlanarEmbedding::new(
            (0..n)
                .map(|_| [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)])
                .collect(),
            pc.source_ids().to_vec(),
        )
        .unwrap();
        let mut prev = 0.0;
        for jb in [4, 8, 16, 32, n - 1] {
            let v = neighborhood_consistency(&pc, &emb, 4, jb).unwrap().value;
            assert!(v >= prev);
            prev = v;
        }
        assert_eq!(
            neighborhood_consistency(&pc, &emb, 4, n - 1).unwrap().value,
            1.0
        );
    }

    #[test]
    fn consistency_rejects_bad_ranges() {
        let pc = PointCloud::from_points(vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap();
        let emb = PlanarEmbedding::new(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            pc.source_ids().to_vec(),
        )
        .unwrap();
        assert!(neighborhood_consistency(&pc, &emb, 0, 1).is_err());
        assert!(neighborhood_consistency(&pc, &emb, 2, 1).is_err());
        assert!(neighborhood_consistency(&pc, &emb, 1, 3).is_err());
    }
}
