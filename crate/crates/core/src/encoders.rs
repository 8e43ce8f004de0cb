//! Observation encoders shared by both streams: one small network each for
//! depth rays, the occupancy grid and telemetry, concatenated into a single
//! feature vector.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::config::{parse_value, KvConfig};
use crate::dataset::ObsLayout;
use crate::error::{Error, Result};
use crate::nn::{Activation, Mlp, MlpCache, MlpGrads};

/// Hidden and output widths of each encoder (input widths come from the layout).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderWidths {
    pub depth: Vec<usize>,
    pub occupancy: Vec<usize>,
    pub telemetry: Vec<usize>,
}

impl Default for EncoderWidths {
    fn default() -> Self {
        Self { depth: vec![64, 32], occupancy: vec![128, 32], telemetry: vec![32, 16] }
    }
}

impl EncoderWidths {
    pub fn output_width(&self) -> usize {
        self.depth.last().copied().unwrap_or(0)
            + self.occupancy.last().copied().unwrap_or(0)
            + self.telemetry.last().copied().unwrap_or(0)
    }
}

pub fn widths_to_string(w: &[usize]) -> String {
    w.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

pub fn parse_widths(key: &str, value: &str) -> Result<Vec<usize>> {
    let w: Vec<usize> = value
        .split(',')
        .map(|p| parse_value::<usize>(key, p.trim()))
        .collect::<Result<_>>()?;
    if w.is_empty() || w.contains(&0) {
        return Err(Error::config(key, "widths must be positive"));
    }
    Ok(w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationEncoders {
    pub layout: ObsLayout,
    pub depth: Mlp,
    pub occupancy: Mlp,
    pub telemetry: Mlp,
}

pub struct EncoderCache {
    depth: MlpCache,
    occupancy: MlpCache,
    telemetry: MlpCache,
}

fn with_input(input: usize, rest: &[usize]) -> Vec<usize> {
    let mut w = vec![input];
    w.extend_from_slice(rest);
    w
}

impl ObservationEncoders {
    pub fn init<R: Rng + ?Sized>(layout: ObsLayout, widths: &EncoderWidths, rng: &mut R) -> Result<Self> {
        Ok(Self {
            layout,
            depth: Mlp::init(&with_input(layout.n_rays, &widths.depth), Activation::Relu, rng)?,
            occupancy: Mlp::init(&with_input(layout.occupancy_width(), &widths.occupancy), Activation::Relu, rng)?,
            telemetry: Mlp::init(&with_input(layout.telemetry_width(), &widths.telemetry), Activation::Relu, rng)?,
        })
    }

    pub fn from_networks(layout: ObsLayout, depth: Mlp, occupancy: Mlp, telemetry: Mlp) -> Result<Self> {
        if depth.input_width() != layout.n_rays
            || occupancy.input_width() != layout.occupancy_width()
            || telemetry.input_width() != layout.telemetry_width()
        {
            return Err(Error::Shape("encoder inputs do not match observation layout".into()));
        }
        Ok(Self { layout, depth, occupancy, telemetry })
    }

    pub fn output_width(&self) -> usize {
        self.depth.output_width() + self.occupancy.output_width() + self.telemetry.output_width()
    }

    pub fn widths(&self) -> EncoderWidths {
        EncoderWidths {
            depth: self.depth.widths()[1..].to_vec(),
            occupancy: self.occupancy.widths()[1..].to_vec(),
            telemetry: self.telemetry.widths()[1..].to_vec(),
        }
    }

    fn split<'a>(&self, x: &'a ArrayView2<f64>) -> Result<[ArrayView2<'a, f64>; 3]> {
        if x.ncols() != self.layout.feature_width() {
            return Err(Error::Shape(format!(
                "observation features have width {}, layout expects {}",
                x.ncols(),
                self.layout.feature_width()
            )));
        }
        let r = self.layout.n_rays;
        let o = r + self.layout.occupancy_width();
        Ok([x.slice_move(s![.., ..r]), x.slice_move(s![.., r..o]), x.slice_move(s![.., o..])])
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let [d, o, t] = self.split(&x)?;
        let parts = [self.depth.predict(d)?, self.occupancy.predict(o)?, self.telemetry.predict(t)?];
        Ok(concatenate(Axis(1), &[parts[0].view(), parts[1].view(), parts[2].view()]).expect("same rows"))
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, EncoderCache)> {
        let [d, o, t] = self.split(&x)?;
        let (yd, cd) = self.depth.forward(d)?;
        let (yo, co) = self.occupancy.forward(o)?;
        let (yt, ct) = self.telemetry.forward(t)?;
        let feats = concatenate(Axis(1), &[yd.view(), yo.view(), yt.view()]).expect("same rows");
        Ok((feats, EncoderCache { depth: cd, occupancy: co, telemetry: ct }))
    }

    pub fn backward(&self, cache: &EncoderCache, grad: ArrayView2<f64>) -> Result<[MlpGrads; 3]> {
        let a = self.depth.output_width();
        let b = a + self.occupancy.output_width();
        let (gd, _) = self.depth.backward(&cache.depth, grad.slice(s![.., ..a]))?;
        let (go, _) = self.occupancy.backward(&cache.occupancy, grad.slice(s![.., a..b]))?;
        let (gt, _) = self.telemetry.backward(&cache.telemetry, grad.slice(s![.., b..]))?;
        Ok([gd, go, gt])
    }
}

/// Encoder and trunk hidden widths shared by both model families.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchConfig {
    pub encoders: EncoderWidths,
    pub trunk: Vec<usize>,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self { encoders: EncoderWidths::default(), trunk: vec![128, 64, 32] }
    }
}

impl KvConfig for ArchConfig {
    const KEYS: &'static [&'static str] = &["depth_widths", "occupancy_widths", "telemetry_widths", "trunk_widths"];

    fn set_kv(&mut self, key: &str, value: &str) -> Result<bool> {
        let slot = match key {
            "depth_widths" => &mut self.encoders.depth,
            "occupancy_widths" => &mut self.encoders.occupancy,
            "telemetry_widths" => &mut self.encoders.telemetry,
            "trunk_widths" => &mut self.trunk,
            _ => return Ok(false),
        };
        *slot = parse_widths(key, value)?;
        Ok(true)
    }

    fn to_kv(&self) -> Vec<(&'static str, String)> {
        vec![
            ("depth_widths", widths_to_string(&self.encoders.depth)),
            ("occupancy_widths", widths_to_string(&self.encoders.occupancy)),
            ("telemetry_widths", widths_to_string(&self.encoders.telemetry)),
            ("trunk_widths", widths_to_string(&self.trunk)),
        ]
    }

    fn validate(&self) -> Result<()> {
        for (k, w) in self.to_kv() {
            parse_widths(k, &w)?;
        }
        Ok(())
    }
}
