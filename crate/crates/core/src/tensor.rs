//! Dense channel-major raster storage shared by the layout, diffusion and
//! metric code.

use std::fmt;

use crate::error::{Error, Result};

/// A `(channels, height, width)` array of reals stored channel-major.
#[derive(Clone, PartialEq)]
pub struct ChannelStack {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

/// Shape triple `(channels, height, width)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Shape {
            channels,
            height,
            width,
        }
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.channels, self.height, self.width)
    }
}

impl ChannelStack {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        ChannelStack {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} values for shape {shape}", shape.len()),
                actual: format!("{} values", data.len()),
            });
        }
        Ok(ChannelStack {
            channels: shape.channels,
            height: shape.height,
            width: shape.width,
            data,
        })
    }

    pub fn shape(&self) -> Shape {
        Shape::new(self.channels, self.height, self.width)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Number of scalar entries.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, c: usize, row: usize, col: usize) -> usize {
        debug_assert!(c < self.channels && row < self.height && col < self.width);
        (c * self.height + row) * self.width + col
    }

    #[inline]
    pub fn get(&self, c: usize, row: usize, col: usize) -> f64 {
        self.data[self.index(c, row, col)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, row: usize, col: usize, value: f64) {
        let i = self.index(c, row, col);
        self.data[i] = value;
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let plane = self.height * self.width;
        &self.data[c * plane..(c + 1) * plane]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let plane = self.height * self.width;
        &mut self.data[c * plane..(c + 1) * plane]
    }

    /// Copies channels `start..end` into a new stack.
    pub fn slice_channels(&self, start: usize, end: usize) -> ChannelStack {
        assert!(start <= end && end <= self.channels);
        let plane = self.height * self.width;
        ChannelStack {
            channels: end - start,
            height: self.height,
            width: self.width,
            data: self.data[start * plane..end * plane].to_vec(),
        }
    }

    /// Stacks `a` on top of `b` along the channel axis.
    pub fn concat(a: &ChannelStack, b: &ChannelStack) -> Result<ChannelStack> {
        if a.height != b.height || a.width != b.width {
            return Err(Error::ShapeMismatch {
                expected: format!("spatial size {}x{}", a.height, a.width),
                actual: format!("{}x{}", b.height, b.width),
            });
        }
        let mut data = Vec::with_capacity(a.len() + b.len());
        data.extend_from_slice(&a.data);
        data.extend_from_slice(&b.data);
        Ok(ChannelStack {
            channels: a.channels + b.channels,
            height: a.height,
            width: a.width,
            data,
        })
    }

    pub fn squared_distance(&self, other: &ChannelStack) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn max_abs_difference(&self, other: &ChannelStack) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl fmt::Debug for ChannelStack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChannelStack")
            .field("shape", &self.shape())
            .finish_non_exhaustive()
    }
}
