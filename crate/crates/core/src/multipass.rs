//! Multipass clutter cancellation and noncoherent change detection.
//!
//! `K` registered passes over the same scene are stacked channel-wise into a
//! `Kp`-channel phase history. The shared background then has a rank-`K`
//! spatial factor and the usual temporal factor, so LR-Kron with `r_a = K`
//! estimates both.

use crate::error::{mismatch, Error, Result};
use crate::linalg::{ComplexMatrix, C64, ZERO};
use crate::lrkron::{lr_kron_estimate, sample_covariance, KronCovEstimate, LrKronConfig};
use crate::sim::PhaseHistory;
use crate::stap::{detection_image, spatial_candidate, DetectionMap, FilterKind, StapFilter};

/// Per range bin, the `Kp x q` matrix `[X₁; …; X_K]`, stored as `vec` of its transpose.
#[derive(Clone, Debug, PartialEq)]
pub struct StackedHistory {
    passes: usize,
    p: usize,
    q: usize,
    n_bins: usize,
    data: Vec<C64>,
    source: PhaseHistory,
}

impl StackedHistory {
    pub fn passes(&self) -> usize {
        self.passes
    }

    /// Channels per pass.
    pub fn p(&self) -> usize {
        self.p
    }

    /// Stacked channel count `Kp`.
    pub fn channels(&self) -> usize {
        self.passes * self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    /// Rows `k·p .. (k+1)·p` of every stacked slice belong to pass `k`.
    pub fn pass_rows(&self, pass: usize) -> std::ops::Range<usize> {
        pass * self.p..(pass + 1) * self.p
    }

    pub fn bin(&self, bin: usize) -> &[C64] {
        let n = self.channels() * self.q;
        &self.data[bin * n..(bin + 1) * n]
    }

    pub fn bins(&self) -> Vec<&[C64]> {
        (0..self.n_bins).map(|m| self.bin(m)).collect()
    }

    pub fn matrix(&self, bin: usize) -> ComplexMatrix {
        ComplexMatrix::from_row_major(self.channels(), self.q, self.bin(bin).to_vec())
            .expect("slice has Kp*q entries")
    }
}

/// Stacks all passes of a cube channel-wise.
pub fn stack_passes(cube: &PhaseHistory) -> StackedHistory {
    let (k, p, q, n_bins) = (cube.passes(), cube.p(), cube.q(), cube.n_bins());
    let mut data = Vec::with_capacity(k * p * q * n_bins);
    for m in 0..n_bins {
        for pass in 0..k {
            data.extend_from_slice(cube.bin(pass, m));
        }
    }
    StackedHistory {
        passes: k,
        p,
        q,
        n_bins,
        data,
        source: cube.clone(),
    }
}

/// Inverse of [`stack_passes`].
pub fn unstack(stacked: &StackedHistory) -> Result<PhaseHistory> {
    let (k, p, q, n_bins) = (stacked.passes, stacked.p, stacked.q, stacked.n_bins);
    let mut data = vec![ZERO; k * p * q * n_bins];
    let slice = p * q;
    for m in 0..n_bins {
        let src = stacked.bin(m);
        for pass in 0..k {
            let dst = (pass * n_bins + m) * slice;
            data[dst..dst + slice].copy_from_slice(&src[pass * slice..(pass + 1) * slice]);
        }
    }
    PhaseHistory::from_parts(p, q, k, n_bins, data, stacked.source.truth().to_vec())
}

/// Joins single-pass cubes of equal shape into one `K`-pass cube.
pub fn join_passes(cubes: &[PhaseHistory]) -> Result<PhaseHistory> {
    let first = cubes.first().ok_or(Error::Empty("pass list"))?;
    let (p, q, n_bins) = (first.p(), first.q(), first.n_bins());
    let mut data = Vec::new();
    let mut truth = Vec::new();
    let mut pass_offset = 0;
    for c in cubes {
        if (c.p(), c.q(), c.n_bins()) != (p, q, n_bins) {
            return Err(mismatch(
                "join_passes",
                format!("p={p} q={q} n_bins={n_bins}"),
                format!("p={} q={} n_bins={}", c.p(), c.q(), c.n_bins()),
            ));
        }
        data.extend_from_slice(c.as_slice());
        truth.extend(c.truth().iter().map(|t| {
            let mut t = *t;
            t.pass += pass_offset;
            t
        }));
        pass_offset += c.passes();
    }
    PhaseHistory::from_parts(p, q, pass_offset, n_bins, data, truth)
}

/// LR-Kron on the stacked sample covariance of the given training bins, with
/// spatial rank `K` on the `Kp` stacked channels.
pub fn multipass_estimate(
    stacked: &StackedHistory,
    training: &[usize],
    temporal_rank: usize,
    tolerance: f64,
) -> Result<KronCovEstimate> {
    if training.is_empty() {
        return Err(Error::Empty("training bins"));
    }
    if let Some(&m) = training.iter().find(|&&m| m >= stacked.n_bins) {
        return Err(Error::InvalidParameter(format!(
            "training bin {m} is outside {} range bins",
            stacked.n_bins
        )));
    }
    let xs: Vec<&[C64]> = training.iter().map(|&m| stacked.bin(m)).collect();
    let s = sample_covariance(&xs, stacked.channels(), stacked.q)?;
    let cfg = LrKronConfig::new(stacked.passes, temporal_rank).tolerance(tolerance);
    lr_kron_estimate(&s, &cfg)
}

/// Spatial candidates on the stacked axis: the single-pass `h` grid placed in
/// the rows of one pass, zero elsewhere.
pub fn stacked_candidates(grid: &[f64], p: usize, passes: usize, pass: usize) -> Vec<Vec<C64>> {
    grid.iter()
        .map(|&g| {
            let mut h = vec![ZERO; passes * p];
            h[pass * p..(pass + 1) * p].copy_from_slice(&spatial_candidate(g, p));
            h
        })
        .collect()
}

/// Settings for [`pass_images`].
#[derive(Clone, Debug, PartialEq)]
pub struct MultipassDetection {
    pub temporal_rank: usize,
    pub tolerance: f64,
    pub doppler_grid: Vec<f64>,
    pub spatial_grid: Vec<f64>,
    pub temporal_projection: bool,
}

/// One detection image per pass after multipass Kronecker filtering.
///
/// The image of pass `k` is formed with the passes rotated so that `k` comes
/// first. The multipass estimate is equivariant under that relabeling, so this
/// is the same filter in exact arithmetic; doing it explicitly makes each image
/// a function of the data alone, and identical passes give bitwise identical
/// images.
pub fn pass_images(
    cube: &PhaseHistory,
    training: &[usize],
    settings: &MultipassDetection,
) -> Result<Vec<DetectionMap>> {
    let k = cube.passes();
    (0..k)
        .map(|pass| {
            let order: Vec<usize> = (0..k).map(|j| (pass + j) % k).collect();
            let rotated = reorder_passes(cube, &order)?;
            let stacked = stack_passes(&rotated);
            let est = multipass_estimate(
                &stacked,
                training,
                settings.temporal_rank,
                settings.tolerance,
            )?;
            let filter =
                StapFilter::from_estimate(FilterKind::Kron, &est, settings.temporal_projection)?;
            let candidates = stacked_candidates(&settings.spatial_grid, cube.p(), k, 0);
            detection_image(
                &filter,
                &stacked.bins(),
                &settings.doppler_grid,
                &candidates,
            )
        })
        .collect()
}

fn reorder_passes(cube: &PhaseHistory, order: &[usize]) -> Result<PhaseHistory> {
    let mut data = Vec::with_capacity(cube.as_slice().len());
    for &pass in order {
        for m in 0..cube.n_bins() {
            data.extend_from_slice(cube.bin(pass, m));
        }
    }
    PhaseHistory::from_parts(
        cube.p(),
        cube.q(),
        cube.passes(),
        cube.n_bins(),
        data,
        Vec::new(),
    )
}

fn check_same_shape(a: &DetectionMap, b: &DetectionMap) -> Result<()> {
    if (a.rows(), a.cols()) != (b.rows(), b.cols()) {
        return Err(mismatch(
            "change_detect",
            format!("{}x{}", a.rows(), a.cols()),
            format!("{}x{}", b.rows(), b.cols()),
        ));
    }
    Ok(())
}

/// Pixelwise `|mission − reference|` of two magnitude images.
pub fn change_detect(mission: &DetectionMap, reference: &DetectionMap) -> Result<DetectionMap> {
    check_same_shape(mission, reference)?;
    let values = mission
        .values()
        .iter()
        .zip(reference.values())
        .map(|(a, b)| (a - b).abs())
        .collect();
    DetectionMap::new(mission.doppler_grid().to_vec(), values)
}

/// Pixelwise `mission − reference`; positive where something appeared.
pub fn change_detect_signed(mission: &DetectionMap, reference: &DetectionMap) -> Result<Vec<f64>> {
    check_same_shape(mission, reference)?;
    Ok(mission
        .values()
        .iter()
        .zip(reference.values())
        .map(|(a, b)| a - b)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{gen_clutter, gen_multipass, MultipassConfig, SceneConfig, Target};
    use crate::stap::uniform_grid;

    fn two_pass(seed: u64) -> PhaseHistory {
        let mut cfg = SceneConfig::new(2, 8, 12);
        cfg.seed = seed;
        gen_multipass(&cfg, &MultipassConfig::new(2)).unwrap()
    }

    #[test]
    fn single_pass_stack_is_identity() {
        let cube = gen_clutter(&SceneConfig::new(2, 4, 3)).unwrap();
        let s = stack_passes(&cube);
        for m in 0..3 {
            assert_eq!(s.bin(m), cube.bin(0, m));
        }
        assert_eq!(unstack(&s).unwrap(), cube);
    }

    #[test]
    fn stacking_layout_and_round_trip() {
        let cube = two_pass(3);
        let s = stack_passes(&cube);
        assert_eq!(s.channels(), 4);
        for m in 0..cube.n_bins() {
            let x = s.matrix(m);
            for pass in 0..2 {
                let part = cube.matrix(pass, m);
                for (i, r) in s.pass_rows(pass).enumerate() {
                    assert_eq!(x.row(r), part.row(i));
                }
            }
        }
        assert_eq!(unstack(&s).unwrap(), cube);
    }

    #[test]
    fn join_matches_generated_layout() {
        let cube = two_pass(4);
        let split: Vec<PhaseHistory> = (0..2)
            .map(|k| {
                let data = cube.bins(k).concat();
                PhaseHistory::from_parts(2, 8, 1, 12, data, Vec::new()).unwrap()
            })
            .collect();
        assert_eq!(join_passes(&split).unwrap().as_slice(), cube.as_slice());
        let other = gen_clutter(&SceneConfig::new(3, 8, 12)).unwrap();
        assert!(join_passes(&[split[0].clone(), other]).is_err());
    }

    #[test]
    fn change_detection_is_symmetric_and_zero_on_equal_maps() {
        let a = DetectionMap::new(vec![0.0, 0.5], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = DetectionMap::new(vec![0.0, 0.5], vec![2.0, 2.0, 1.0, 5.0]).unwrap();
        assert_eq!(
            change_detect(&a, &b).unwrap(),
            change_detect(&b, &a).unwrap()
        );
        assert!(change_detect(&a, &a)
            .unwrap()
            .values()
            .iter()
            .all(|&v| v == 0.0));
        assert_eq!(
            change_detect_signed(&a, &b).unwrap(),
            vec![-1.0, 0.0, 2.0, -1.0]
        );
        let c = DetectionMap::new(vec![0.0], vec![1.0]).unwrap();
        assert!(change_detect(&a, &c).is_err());
    }

    #[test]
    fn identical_passes_give_exactly_zero_change() {
        let single = gen_clutter(&SceneConfig::new(2, 8, 10)).unwrap();
        let cube = join_passes(&[single.clone(), single]).unwrap();
        let settings = MultipassDetection {
            temporal_rank: 2,
            tolerance: 1e-4,
            doppler_grid: uniform_grid(8),
            spatial_grid: uniform_grid(4),
            temporal_projection: true,
        };
        let training: Vec<usize> = (0..10).collect();
        let images = pass_images(&cube, &training, &settings).unwrap();
        let change = change_detect(&images[1], &images[0]).unwrap();
        assert!(change.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn appearing_target_peaks_the_change_map() {
        let mut cube = two_pass(5);
        cube.inject_target(
            Target {
                pass: 1,
                bin: 7,
                doppler: 0.25,
                amplitude: C64::new(30.0, 0.0),
            },
            2.0,
        )
        .unwrap();
        let settings = MultipassDetection {
            temporal_rank: 4,
            tolerance: 1e-4,
            doppler_grid: uniform_grid(8),
            spatial_grid: uniform_grid(16),
            temporal_projection: true,
        };
        let training: Vec<usize> = (0..12).filter(|&m| m != 7).collect();
        let images = pass_images(&cube, &training, &settings).unwrap();
        let change = change_detect(&images[1], &images[0]).unwrap();
        assert_eq!(change.argmax(), (7, 2));
    }

    #[test]
    fn estimate_rejects_bad_training() {
        let s = stack_passes(&two_pass(6));
        assert!(multipass_estimate(&s, &[], 2, 1e-4).is_err());
        assert!(multipass_estimate(&s, &[12], 2, 1e-4).is_err());
    }
}
