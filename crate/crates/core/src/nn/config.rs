use crate::error::{Error, Result};

/// A `channels x height x width` activation volume. Fully-connected outputs
/// are `units x 1 x 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub const fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerSpec {
    Conv {
        filters: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Relu,
    MaxPool {
        window: usize,
        stride: usize,
    },
    Fc {
        units: usize,
    },
    Dropout {
        rate: f64,
    },
}

impl LayerSpec {
    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Conv { .. } | LayerSpec::Fc { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool { .. } => "maxpool",
            LayerSpec::Fc { .. } => "fc",
            LayerSpec::Dropout { .. } => "dropout",
        }
    }

    /// Output shape for a given input shape, or an error if the layer cannot
    /// be applied to it.
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        match *self {
            LayerSpec::Conv {
                filters,
                kernel,
                stride,
                padding,
            } => {
                if filters == 0 || kernel == 0 || stride == 0 {
                    return bad("conv filters, kernel and stride must be positive".into());
                }
                let (h, w) = (input.height + 2 * padding, input.width + 2 * padding);
                if kernel > h || kernel > w {
                    return bad(format!("conv kernel {kernel} larger than padded input {h}x{w}"));
                }
                Ok(Shape::new(
                    filters,
                    (h - kernel) / stride + 1,
                    (w - kernel) / stride + 1,
                ))
            }
            LayerSpec::MaxPool { window, stride } => {
                if window == 0 || stride == 0 {
                    return bad("maxpool window and stride must be positive".into());
                }
                if window > input.height || window > input.width {
                    return bad(format!(
                        "pool window {window} larger than input {}x{}",
                        input.height, input.width
                    ));
                }
                Ok(Shape::new(
                    input.channels,
                    (input.height - window) / stride + 1,
                    (input.width - window) / stride + 1,
                ))
            }
            LayerSpec::Fc { units } => {
                if units == 0 {
                    return bad("fc units must be positive".into());
                }
                Ok(Shape::new(units, 1, 1))
            }
            LayerSpec::Relu => Ok(input),
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return bad(format!("dropout rate {rate} outside [0, 1)"));
                }
                Ok(input)
            }
        }
    }

    /// `(weight count, bias count)` for an input shape.
    pub fn param_counts(&self, input: Shape) -> (usize, usize) {
        match *self {
            LayerSpec::Conv { filters, kernel, .. } => (filters * input.channels * kernel * kernel, filters),
            LayerSpec::Fc { units } => (units * input.len(), units),
            _ => (0, 0),
        }
    }

    /// Number of inputs feeding each output unit.
    pub fn fan_in(&self, input: Shape) -> usize {
        match *self {
            LayerSpec::Conv { kernel, .. } => input.channels * kernel * kernel,
            LayerSpec::Fc { .. } => input.len(),
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub input: Shape,
    pub layers: Vec<LayerSpec>,
    pub num_classes: usize,
    /// Seeds weight initialization.
    pub seed: u64,
}

impl NetworkConfig {
    /// The scaled-down default topology:
    /// conv(8, 5x5, /2) - relu - maxpool(3, /2) - conv(16, 3x3, pad 1) - relu -
    /// maxpool(2, /2) - fc(64) - relu - dropout(0.5) - fc(M).
    pub fn mini(size: usize, channels: usize, num_classes: usize, seed: u64) -> Self {
        Self {
            input: Shape::new(channels, size, size),
            layers: vec![
                LayerSpec::Conv {
                    filters: 8,
                    kernel: 5,
                    stride: 2,
                    padding: 0,
                },
                LayerSpec::Relu,
                LayerSpec::MaxPool { window: 3, stride: 2 },
                LayerSpec::Conv {
                    filters: 16,
                    kernel: 3,
                    stride: 1,
                    padding: 1,
                },
                LayerSpec::Relu,
                LayerSpec::MaxPool { window: 2, stride: 2 },
                LayerSpec::Fc { units: 64 },
                LayerSpec::Relu,
                LayerSpec::Dropout { rate: 0.5 },
                LayerSpec::Fc { units: num_classes },
            ],
            num_classes,
            seed,
        }
    }

    /// Input shape of every layer followed by the final output shape.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        if self.input.is_empty() {
            return Err(Error::InvalidConfig("input shape has a zero dimension".into()));
        }
        if self.num_classes == 0 {
            return Err(Error::InvalidConfig("num_classes must be positive".into()));
        }
        let mut shapes = Vec::with_capacity(self.layers.len() + 1);
        let mut cur = self.input;
        shapes.push(cur);
        for (i, layer) in self.layers.iter().enumerate() {
            cur = layer
                .output_shape(cur)
                .map_err(|e| Error::InvalidConfig(format!("layer {i} ({}): {e}", layer.name())))?;
            shapes.push(cur);
        }
        if cur.len() != self.num_classes {
            return Err(Error::InvalidConfig(format!(
                "network outputs {} values but num_classes is {}",
                cur.len(),
                self.num_classes
            )));
        }
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<()> {
        self.shapes().map(|_| ())
    }

    pub fn first_layer(&self) -> Option<&LayerSpec> {
        self.layers.first()
    }
}
