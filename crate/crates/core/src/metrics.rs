//! Playing metrics (time alive, kills, positive kill ratio) and exploration
//! metrics over position densities (KL, correlation, similarity).

use std::io::Write;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::sim::{EndReason, StepEvents};

pub const KL_EPS: f64 = 1e-7;
pub const DEFAULT_RESOLUTION: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeStats {
    pub ticks: u64,
    pub max_ticks: u64,
    pub kills: u32,
    pub reason: EndReason,
}

impl EpisodeStats {
    pub fn from_events(events: &[StepEvents], max_ticks: u64) -> Self {
        Self {
            ticks: events.len() as u64,
            max_ticks,
            kills: events.iter().map(|e| e.kills).sum(),
            reason: events.last().map_or(EndReason::None, |e| e.reason),
        }
    }

    pub fn time_alive(&self) -> f64 {
        if self.max_ticks == 0 {
            return 0.0;
        }
        (self.ticks as f64 / self.max_ticks as f64).min(1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlayStats {
    pub episodes: Vec<EpisodeStats>,
    pub mean_kills: f64,
    pub median_kills: f64,
    pub mean_time_alive: f64,
    pub median_time_alive: f64,
    pub pkr: f64,
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn play_stats(episodes: &[EpisodeStats]) -> Result<PlayStats> {
    if episodes.is_empty() {
        return Err(Error::InvalidArgument("play stats need at least one episode".into()));
    }
    let kills: Vec<f64> = episodes.iter().map(|e| e.kills as f64).collect();
    let alive: Vec<f64> = episodes.iter().map(EpisodeStats::time_alive).collect();
    let scoring = episodes.iter().filter(|e| e.kills >= 1).count();
    Ok(PlayStats {
        episodes: episodes.to_vec(),
        mean_kills: mean(&kills),
        median_kills: median(&kills),
        mean_time_alive: mean(&alive),
        median_time_alive: median(&alive),
        pkr: scoring as f64 / episodes.len() as f64,
    })
}

/// One row per episode, then an `aggregate` row holding totals of the tick
/// columns and means of the rest.
pub fn write_play_stats_csv<W: Write>(w: &mut W, stats: &PlayStats) -> Result<()> {
    writeln!(w, "episode,ticks,max_ticks,time_alive,kills,end_reason")?;
    for (i, e) in stats.episodes.iter().enumerate() {
        writeln!(w, "{i},{},{},{:.6},{},{}", e.ticks, e.max_ticks, e.time_alive(), e.kills, e.reason.as_str())?;
    }
    let ticks: u64 = stats.episodes.iter().map(|e| e.ticks).sum();
    let max: u64 = stats.episodes.iter().map(|e| e.max_ticks).sum();
    writeln!(w, "aggregate,{ticks},{max},{:.6},{:.6},pkr={:.6}", stats.mean_time_alive, stats.mean_kills, stats.pkr)?;
    Ok(())
}

/// Axis-aligned rectangle covered by a density grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extent {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Extent {
    pub fn square(size: f64) -> Self {
        Self { x0: 0.0, y0: 0.0, x1: size, y1: size }
    }

    fn is_valid(&self) -> bool {
        self.x1 > self.x0 && self.y1 > self.y0 && [self.x0, self.y0, self.x1, self.y1].iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// Scott's rule: per-axis `std * n^(-1/6)`, averaged over the two axes.
    Scott,
    Fixed(f64),
}

/// Normalized density over `resolution x resolution` cells. Row `r` spans
/// the `r`-th band of y, column `c` the `c`-th band of x.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub resolution: usize,
    pub extent: Extent,
    pub bandwidth: f64,
    pub cells: Array2<f64>,
}

fn axis_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

pub fn scott_bandwidth(points: &[[f64; 2]]) -> f64 {
    let xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
    let ys: Vec<f64> = points.iter().map(|p| p[1]).collect();
    0.5 * (axis_std(&xs) + axis_std(&ys)) * (points.len() as f64).powf(-1.0 / 6.0)
}

/// Isotropic Gaussian KDE evaluated at cell centres and normalized to sum 1.
///
/// If Scott's rule gives zero (a single point, or all points equal) the
/// larger cell side is used as bandwidth.
pub fn kde_2d(points: &[[f64; 2]], extent: Extent, resolution: usize, bandwidth: Bandwidth) -> Result<DensityGrid> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("kde needs at least one point".into()));
    }
    if resolution == 0 || !extent.is_valid() {
        return Err(Error::InvalidArgument("kde needs a positive resolution and a non-empty extent".into()));
    }
    let cw = (extent.x1 - extent.x0) / resolution as f64;
    let ch = (extent.y1 - extent.y0) / resolution as f64;
    let h = match bandwidth {
        Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => h,
        Bandwidth::Fixed(h) => return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {h}"))),
        Bandwidth::Scott => {
            let h = scott_bandwidth(points);
            if h > 0.0 {
                h
            } else {
                cw.max(ch)
            }
        }
    };
    let inv = 1.0 / (2.0 * h * h);
    let n = points.len();
    // separable kernel: density = Ky^T Kx
    let ky = Array2::from_shape_fn((n, resolution), |(i, r)| {
        let c = extent.y0 + (r as f64 + 0.5) * ch;
        (-(c - points[i][1]).powi(2) * inv).exp()
    });
    let kx = Array2::from_shape_fn((n, resolution), |(i, c)| {
        let x = extent.x0 + (c as f64 + 0.5) * cw;
        (-(x - points[i][0]).powi(2) * inv).exp()
    });
    let mut cells = ky.t().dot(&kx);
    let total = cells.sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::Numeric("kde mass underflowed; points lie far outside the extent".into()));
    }
    cells /= total;
    Ok(DensityGrid { resolution, extent, bandwidth: h, cells })
}

impl DensityGrid {
    pub fn as_slice(&self) -> &[f64] {
        self.cells.as_slice().expect("row-major grid")
    }

    fn check_compatible(&self, other: &DensityGrid) -> Result<()> {
        if self.resolution != other.resolution || self.extent != other.extent {
            return Err(Error::Shape(format!(
                "density grids differ: {}x{} over {:?} vs {}x{} over {:?}",
                self.resolution, self.resolution, self.extent, other.resolution, other.resolution, other.extent
            )));
        }
        Ok(())
    }

    pub fn argmax(&self) -> (usize, usize) {
        let (mut best, mut at) = (f64::NEG_INFINITY, (0, 0));
        for ((r, c), &v) in self.cells.indexed_iter() {
            if v > best {
                best = v;
                at = (r, c);
            }
        }
        at
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        for row in self.cells.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.8e}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    /// Binary greyscale image scaled to the maximum cell, highest y on top.
    pub fn write_pgm<W: Write>(&self, w: &mut W) -> Result<()> {
        let r = self.resolution;
        write!(w, "P5\n{r} {r}\n255\n")?;
        let max = self.cells.iter().cloned().fold(0.0, f64::max);
        let mut bytes = Vec::with_capacity(r * r);
        for row in (0..r).rev() {
            for col in 0..r {
                let v = if max > 0.0 { self.cells[[row, col]] / max } else { 0.0 };
                bytes.push((v * 255.0).round() as u8);
            }
        }
        w.write_all(&bytes)?;
        Ok(())
    }
}

fn check_cells(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != q.len() || p.is_empty() {
        return Err(Error::Shape(format!("cell counts differ: {} vs {}", p.len(), q.len())));
    }
    Ok(())
}

/// `sum_i q_i * ln(eps + q_i / (eps + p_i))`, with `q` the reference density.
pub fn kl_div_cells(p: &[f64], q: &[f64], eps: f64) -> Result<f64> {
    check_cells(p, q)?;
    Ok(p.iter().zip(q).map(|(&pi, &qi)| qi * (eps + qi / (eps + pi)).ln()).sum())
}

/// Pearson correlation over cells.
pub fn cross_corr_cells(p: &[f64], q: &[f64]) -> Result<f64> {
    check_cells(p, q)?;
    let (mp, mq) = (mean(p), mean(q));
    let (mut cov, mut vp, mut vq) = (0.0, 0.0, 0.0);
    for (&a, &b) in p.iter().zip(q) {
        cov += (a - mp) * (b - mq);
        vp += (a - mp).powi(2);
        vq += (b - mq).powi(2);
    }
    if vp == 0.0 || vq == 0.0 {
        return Err(Error::Numeric("correlation undefined for a constant grid".into()));
    }
    Ok((cov / (vp.sqrt() * vq.sqrt())).clamp(-1.0, 1.0))
}

/// Histogram intersection `sum_i min(p_i, q_i)`.
pub fn similarity_cells(p: &[f64], q: &[f64]) -> Result<f64> {
    check_cells(p, q)?;
    Ok(p.iter().zip(q).map(|(a, b)| a.min(*b)).sum())
}

pub fn kl_div(p: &DensityGrid, q_data: &DensityGrid, eps: f64) -> Result<f64> {
    p.check_compatible(q_data)?;
    kl_div_cells(p.as_slice(), q_data.as_slice(), eps)
}

pub fn cross_corr(p: &DensityGrid, q_data: &DensityGrid) -> Result<f64> {
    p.check_compatible(q_data)?;
    cross_corr_cells(p.as_slice(), q_data.as_slice())
}

pub fn similarity(p: &DensityGrid, q_data: &DensityGrid) -> Result<f64> {
    p.check_compatible(q_data)?;
    similarity_cells(p.as_slice(), q_data.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ep(ticks: u64, kills: u32) -> EpisodeStats {
        EpisodeStats { ticks, max_ticks: 100, kills, reason: EndReason::Timeout }
    }

    #[test]
    fn pkr_and_kill_means() {
        let eps: Vec<_> = (0..20).map(|i| ep(100, u32::from(i < 9))).collect();
        assert!((play_stats(&eps).unwrap().pkr - 0.45).abs() < 1e-12);
        let s = play_stats(&[ep(100, 0), ep(100, 0), ep(100, 2), ep(100, 4)]).unwrap();
        assert_eq!(s.mean_kills, 1.5);
        assert_eq!(s.median_kills, 1.0);
        assert_eq!(s.episodes[0].time_alive(), 1.0);
        assert!(play_stats(&[]).is_err());
    }

    #[test]
    fn time_alive_fraction() {
        let e = EpisodeStats { ticks: 60, max_ticks: 2400, kills: 0, reason: EndReason::FatalCrash };
        assert!((e.time_alive() - 0.025).abs() < 1e-12);
    }

    #[test]
    fn single_point_peaks_at_centre() {
        let g = kde_2d(&[[100.0, 100.0]], Extent::square(200.0), 65, Bandwidth::Scott).unwrap();
        assert_eq!(g.argmax(), (32, 32));
        assert!((g.cells.sum() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn kl_two_cell_toy() {
        let kl = kl_div_cells(&[1.0, 0.0], &[0.5, 0.5], KL_EPS).unwrap();
        let direct = 0.5 * (KL_EPS + 0.5 / (KL_EPS + 1.0)).ln() + 0.5 * (KL_EPS + 0.5 / KL_EPS).ln();
        assert!((kl - direct).abs() < 1e-12);
        assert!((kl - 7.3664).abs() < 1e-3);
    }

    #[test]
    fn correlation_of_reversed_ramp() {
        assert!((cross_corr_cells(&[0.25, 0.75], &[0.75, 0.25]).unwrap() + 1.0).abs() < 1e-12);
        assert!(cross_corr_cells(&[0.5, 0.5], &[0.2, 0.8]).is_err());
    }

    #[test]
    fn disjoint_similarity_is_zero() {
        assert_eq!(similarity_cells(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn mismatched_grids_rejected() {
        let a = kde_2d(&[[1.0, 1.0]], Extent::square(10.0), 4, Bandwidth::Fixed(1.0)).unwrap();
        let b = kde_2d(&[[1.0, 1.0]], Extent::square(10.0), 5, Bandwidth::Fixed(1.0)).unwrap();
        assert!(kl_div(&a, &b, KL_EPS).is_err());
        assert!(similarity(&a, &b).is_err());
    }

    #[test]
    fn pgm_header_and_size() {
        let g = kde_2d(&[[1.0, 1.0]], Extent::square(10.0), 4, Bandwidth::Fixed(1.0)).unwrap();
        let mut buf = Vec::new();
        g.write_pgm(&mut buf).unwrap();
        assert!(buf.starts_with(b"P5\n4 4\n255\n"));
        assert_eq!(buf.len(), 11 + 16);
    }
}
