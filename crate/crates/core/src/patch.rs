//! Nonlocal patch grouping on the reduced image.
//!
//! A group gathers `q` patches of `p x p x k` into a `p² x q x k` tensor:
//! mode 1 walks the pixels of a patch in row-major order, mode 2 the matched
//! patches in ascending distance, mode 3 the reduced bands. The gather is the
//! operator `R_i`; [`scatter_add`] is its adjoint.

use crate::error::{Error, Result};
use crate::subspace::ReducedImage;
use crate::tensor::DenseTensor3;

/// Reference patch positions covering the image.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchGrid {
    pub p: usize,
    pub stride: usize,
    pub row_refs: Vec<usize>,
    pub col_refs: Vec<usize>,
}

impl PatchGrid {
    /// Top-left corners in row-major order.
    pub fn references(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.row_refs
            .iter()
            .flat_map(move |&r| self.col_refs.iter().map(move |&c| (r, c)))
    }

    pub fn len(&self) -> usize {
        self.row_refs.len() * self.col_refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn axis_refs(n: usize, p: usize, stride: usize) -> Vec<usize> {
    let last = n - p;
    let mut refs: Vec<usize> = (0..=last).step_by(stride.max(1)).collect();
    if refs.last() != Some(&last) {
        refs.push(last);
    }
    refs
}

/// References every `stride` pixels plus a forced last row and column so the
/// bottom and right borders are covered. Every pixel lies under some patch
/// when `stride <= p`.
pub fn build_grid(n1: usize, n2: usize, p: usize, stride: usize) -> Result<PatchGrid> {
    if p == 0 || p > n1.min(n2) {
        return Err(Error::PatchTooLarge { p, n1, n2 });
    }
    Ok(PatchGrid {
        p,
        stride,
        row_refs: axis_refs(n1, p, stride),
        col_refs: axis_refs(n2, p, stride),
    })
}

/// Matched patches of one group, reference first.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupIndex {
    pub reference: (usize, usize),
    pub members: Vec<(usize, usize)>,
    /// Squared distance of each member to the reference.
    pub distances: Vec<f64>,
}

impl GroupIndex {
    pub fn q(&self) -> usize {
        self.members.len()
    }
}

/// Candidate offsets of a `window`-wide search range: `-(w/2) ..= w-1-w/2`.
fn window_range(center: usize, window: usize, last: usize) -> std::ops::RangeInclusive<usize> {
    let back = window / 2;
    let ahead = window.saturating_sub(1) - back;
    center.saturating_sub(back)..=(center + ahead).min(last)
}

/// Fewest candidate positions along one axis over all references.
pub fn min_window_positions(n: usize, p: usize, window: usize) -> usize {
    let last = n - p;
    (0..=last)
        .map(|c| window_range(c, window, last).count())
        .min()
        .unwrap_or(0)
}

fn patch_distance(z: &DenseTensor3, a: (usize, usize), b: (usize, usize), p: usize) -> f64 {
    let k = z.dims().2;
    let mut d = 0.0;
    for band in 0..k {
        for dc in 0..p {
            for dr in 0..p {
                let diff = z.get(a.0 + dr, a.1 + dc, band) - z.get(b.0 + dr, b.1 + dc, band);
                d += diff * diff;
            }
        }
    }
    d
}

/// The `q` patches nearest the reference within a `window x window` range
/// of top-left positions, by squared Euclidean distance over all `p²·k`
/// entries. The reference comes first; ties go to row-major scan order.
pub fn block_match(
    z: &ReducedImage,
    reference: (usize, usize),
    p: usize,
    q: usize,
    window: usize,
) -> Result<GroupIndex> {
    let (n1, n2, _) = z.dims();
    if p == 0 || p > n1.min(n2) {
        return Err(Error::PatchTooLarge { p, n1, n2 });
    }
    if reference.0 + p > n1 || reference.1 + p > n2 {
        return Err(Error::OutOfBounds(reference.0, reference.1));
    }
    let rows = window_range(reference.0, window, n1 - p);
    let cols = window_range(reference.1, window, n2 - p);
    let mut candidates = Vec::with_capacity(rows.clone().count() * cols.clone().count());
    for r in rows {
        for c in cols.clone() {
            if (r, c) != reference {
                candidates.push(((r, c), patch_distance(z, reference, (r, c), p)));
            }
        }
    }
    if candidates.len() + 1 < q {
        return Err(Error::InsufficientCandidates {
            available: candidates.len() + 1,
            needed: q,
        });
    }
    // stable: equal distances keep scan order
    candidates.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut members = Vec::with_capacity(q);
    let mut distances = Vec::with_capacity(q);
    members.push(reference);
    distances.push(0.0);
    for &(pos, d) in candidates.iter().take(q.saturating_sub(1)) {
        members.push(pos);
        distances.push(d);
    }
    Ok(GroupIndex {
        reference,
        members,
        distances,
    })
}

/// Stacked group tensor `p² x q x k`.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupTensor {
    pub t: DenseTensor3,
    pub owner: GroupIndex,
}

fn check_members(gi: &GroupIndex, p: usize, n1: usize, n2: usize) -> Result<()> {
    match gi.members.iter().find(|&&(r, c)| r + p > n1 || c + p > n2) {
        Some(&(r, c)) => Err(Error::OutOfBounds(r, c)),
        None => Ok(()),
    }
}

/// `R_i z`.
pub fn extract_group(z: &ReducedImage, gi: &GroupIndex, p: usize) -> Result<GroupTensor> {
    let (n1, n2, k) = z.dims();
    check_members(gi, p, n1, n2)?;
    let q = gi.q();
    let mut t = DenseTensor3::zeros((p * p, q, k));
    for band in 0..k {
        for (j, &(r0, c0)) in gi.members.iter().enumerate() {
            for dr in 0..p {
                for dc in 0..p {
                    t.set(dr * p + dc, j, band, z.get(r0 + dr, c0 + dc, band));
                }
            }
        }
    }
    Ok(GroupTensor { t, owner: gi.clone() })
}

/// `target += weight · R_iᵀ g`.
pub fn scatter_add(target: &mut DenseTensor3, gi: &GroupIndex, p: usize, g: &DenseTensor3, weight: f64) -> Result<()> {
    let (n1, n2, k) = target.dims();
    check_members(gi, p, n1, n2)?;
    if g.dims() != (p * p, gi.q(), k) {
        return Err(Error::ShapeMismatch(format!(
            "group tensor {:?} does not match {}x{}x{}",
            g.dims(),
            p * p,
            gi.q(),
            k
        )));
    }
    for band in 0..k {
        for (j, &(r0, c0)) in gi.members.iter().enumerate() {
            for dr in 0..p {
                for dc in 0..p {
                    let o = target.offset(r0 + dr, c0 + dc, band);
                    target.as_mut_slice()[o] += weight * g.get(dr * p + dc, j, band);
                }
            }
        }
    }
    Ok(())
}

/// Group memberships per reduced-image element, the diagonal of `Σ R_iᵀR_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregationMap {
    pub counts: DenseTensor3,
}

impl AggregationMap {
    pub fn build(dims: (usize, usize, usize), groups: &[GroupIndex], p: usize) -> Result<Self> {
        let (n1, n2, _) = dims;
        let mut plane = vec![0.0; n1 * n2];
        for gi in groups {
            check_members(gi, p, n1, n2)?;
            for &(r0, c0) in &gi.members {
                for dc in 0..p {
                    for dr in 0..p {
                        plane[(r0 + dr) + n1 * (c0 + dc)] += 1.0;
                    }
                }
            }
        }
        let counts = DenseTensor3::from_fn(dims, |r, c, _| plane[r + n1 * c]);
        Ok(Self { counts })
    }

    pub fn min_count(&self) -> f64 {
        self.counts.min_max().0
    }
}

/// Closed-form minimizer of
/// `½‖z − data_term‖² + Σ_i (w_i / 2)‖R_i z − L_i‖²`, i.e.
/// `z = (data_term + Σ w_i R_iᵀ L_i) / (1 + Σ w_i R_iᵀ R_i)` elementwise.
/// With `w_i = 2λ1/σ_i²` this is the reduced-image update.
///
/// Accumulation runs in group order, so the result does not depend on how
/// the group estimates were produced.
pub fn aggregate(
    groups: &[(GroupIndex, DenseTensor3)],
    weights: &[f64],
    p: usize,
    data_term: &DenseTensor3,
) -> Result<ReducedImage> {
    if groups.len() != weights.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} groups but {} weights",
            groups.len(),
            weights.len()
        )));
    }
    let dims = data_term.dims();
    let mut numerator = data_term.clone();
    let mut denominator = DenseTensor3::filled(dims, 1.0);
    let (n1, n2, k) = dims;
    for ((gi, l), &w) in groups.iter().zip(weights) {
        scatter_add(&mut numerator, gi, p, l, w)?;
        for &(r0, c0) in &gi.members {
            for band in 0..k {
                for dc in 0..p {
                    for dr in 0..p {
                        let o = (r0 + dr) + n1 * ((c0 + dc) + n2 * band);
                        denominator.as_mut_slice()[o] += w;
                    }
                }
            }
        }
    }
    let z = numerator.zip_map(&denominator, |a, b| a / b)?;
    Ok(ReducedImage::new(z))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg(seed: u64) -> impl FnMut() -> f64 {
        let mut s = seed;
        move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        }
    }

    fn random_reduced(dims: (usize, usize, usize), seed: u64) -> ReducedImage {
        let mut next = lcg(seed);
        ReducedImage::new(DenseTensor3::from_fn(dims, |_, _, _| next()))
    }

    #[test]
    fn grid_basic_and_forced_border() {
        let g = build_grid(8, 8, 4, 4).unwrap();
        assert_eq!(g.row_refs, vec![0, 4]);
        assert_eq!(g.col_refs, vec![0, 4]);
        assert_eq!(g.references().collect::<Vec<_>>(), vec![(0, 0), (0, 4), (4, 0), (4, 4)]);
        let g = build_grid(9, 8, 4, 4).unwrap();
        assert_eq!(g.row_refs, vec![0, 4, 5]);
        assert!(matches!(build_grid(3, 8, 4, 4), Err(Error::PatchTooLarge { .. })));
    }

    #[test]
    fn constant_image_uses_scan_order() {
        let z = ReducedImage::new(DenseTensor3::filled((10, 10, 2), 0.3));
        let gi = block_match(&z, (3, 3), 2, 5, 5).unwrap();
        // window rows/cols 1..=5, row-major, reference first
        assert_eq!(gi.members, vec![(3, 3), (1, 1), (1, 2), (1, 3), (1, 4)]);
    }

    #[test]
    fn exact_copies_are_selected() {
        let mut next = lcg(3);
        let mut z = DenseTensor3::from_fn((12, 12, 2), |_, _, _| 10.0 + next() * 5.0);
        let copies = [(0, 0), (0, 8), (9, 9)];
        let reference = (4, 4);
        for &(r, c) in &copies {
            for b in 0..2 {
                for dr in 0..3 {
                    for dc in 0..3 {
                        let v = z.get(reference.0 + dr, reference.1 + dc, b);
                        z.set(r + dr, c + dc, b, v);
                    }
                }
            }
        }
        let gi = block_match(&ReducedImage::new(z), reference, 3, 4, 12).unwrap();
        let mut got = gi.members[1..].to_vec();
        got.sort_unstable();
        assert_eq!(got, copies.to_vec());
        assert!(gi.distances.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn matches_exhaustive_sort() {
        let z = random_reduced((16, 16, 3), 7);
        let (p, q, window) = (3, 5, 7);
        for reference in [(0, 0), (6, 9), (13, 13)] {
            let gi = block_match(&z, reference, p, q, window).unwrap();
            let mut all = Vec::new();
            for r in 0..=13usize {
                for c in 0..=13usize {
                    let dr = r as isize - reference.0 as isize;
                    let dc = c as isize - reference.1 as isize;
                    if (-3..=3).contains(&dr) && (-3..=3).contains(&dc) && (r, c) != reference {
                        let mut d = 0.0;
                        for b in 0..3 {
                            for i in 0..p {
                                for j in 0..p {
                                    d += (z.get(r + i, c + j, b) - z.get(reference.0 + i, reference.1 + j, b)).powi(2);
                                }
                            }
                        }
                        all.push((d, r, c));
                    }
                }
            }
            all.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let expected: Vec<(usize, usize)> = std::iter::once(reference)
                .chain(all.iter().take(q - 1).map(|&(_, r, c)| (r, c)))
                .collect();
            assert_eq!(gi.members, expected);
        }
    }

    #[test]
    fn corner_limits_candidates() {
        assert_eq!(min_window_positions(32, 5, 30), 15);
        assert_eq!(min_window_positions(6, 3, 30), 4);
        assert_eq!(min_window_positions(10, 2, 5), 3);
    }

    #[test]
    fn insufficient_candidates() {
        let z = random_reduced((6, 6, 1), 1);
        assert!(matches!(
            block_match(&z, (0, 0), 3, 20, 30),
            Err(Error::InsufficientCandidates {
                available: 16,
                needed: 20
            })
        ));
    }

    #[test]
    fn whole_image_group_is_a_reshape() {
        let z = random_reduced((4, 4, 2), 2);
        let gi = block_match(&z, (0, 0), 4, 1, 1).unwrap();
        let g = extract_group(&z, &gi, 4).unwrap();
        assert_eq!(g.t.dims(), (16, 1, 2));
        for b in 0..2 {
            for r in 0..4 {
                for c in 0..4 {
                    assert_eq!(g.t.get(r * 4 + c, 0, b), z.get(r, c, b));
                }
            }
        }
    }

    #[test]
    fn extract_rejects_out_of_bounds() {
        let z = random_reduced((6, 6, 1), 1);
        let gi = GroupIndex {
            reference: (0, 0),
            members: vec![(0, 0), (4, 4)],
            distances: vec![0.0, 1.0],
        };
        assert!(matches!(extract_group(&z, &gi, 3), Err(Error::OutOfBounds(4, 4))));
    }

    #[test]
    fn gather_scatter_adjoint() {
        let z = random_reduced((9, 8, 3), 4);
        let gi = block_match(&z, (2, 3), 3, 6, 9).unwrap();
        let mut next = lcg(5);
        let g = DenseTensor3::from_fn((9, 6, 3), |_, _, _| next());
        let lhs = extract_group(&z, &gi, 3).unwrap().t.inner(&g).unwrap();
        let mut back = DenseTensor3::zeros(z.dims());
        scatter_add(&mut back, &gi, 3, &g, 1.0).unwrap();
        let rhs = z.inner(&back).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn scatter_with_counts_recovers_image() {
        let z = random_reduced((8, 8, 2), 6);
        let grid = build_grid(8, 8, 3, 2).unwrap();
        let groups: Vec<GroupIndex> = grid
            .references()
            .map(|r| block_match(&z, r, 3, 4, 5).unwrap())
            .collect();
        let map = AggregationMap::build(z.dims(), &groups, 3).unwrap();
        assert!(map.min_count() >= 1.0);
        let mut acc = DenseTensor3::zeros(z.dims());
        for gi in &groups {
            let g = extract_group(&z, gi, 3).unwrap();
            scatter_add(&mut acc, gi, 3, &g.t, 1.0).unwrap();
        }
        let back = acc.zip_map(&map.counts, |a, c| a / c).unwrap();
        assert!(back.sub(&z).unwrap().frobenius_norm() < 1e-12);
    }

    #[test]
    fn aggregate_without_groups_is_data_term() {
        let z = random_reduced((5, 5, 2), 8);
        assert_eq!(aggregate(&[], &[], 2, &z).unwrap(), z);
    }

    #[test]
    fn aggregate_single_covering_group() {
        let data = random_reduced((4, 4, 2), 9);
        let target = random_reduced((4, 4, 2), 10);
        let gi = GroupIndex {
            reference: (0, 0),
            members: vec![(0, 0)],
            distances: vec![0.0],
        };
        let l = extract_group(&target, &gi, 4).unwrap().t;
        let w = 3.0;
        let z = aggregate(&[(gi, l)], &[w], 4, &data).unwrap();
        let expected = data.zip_map(&target, |d, t| d / (1.0 + w) + t * w / (1.0 + w)).unwrap();
        assert!(z.sub(&expected).unwrap().frobenius_norm() < 1e-14);
    }
}
