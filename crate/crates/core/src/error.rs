use core::fmt;

/// Scan direction used by the auto-labeler when reporting a missing target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    TopDown,
    BottomUp,
    LeftRight,
    RightLeft,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Direction::TopDown => "top-down",
            Direction::BottomUp => "bottom-up",
            Direction::LeftRight => "left-right",
            Direction::RightLeft => "right-left",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Raster dimensions are zero or the buffer length disagrees with them.
    InvalidDimensions { width: usize, height: usize, len: usize },
    /// Kernel or structuring element side is even, zero, or larger than the image.
    InvalidKernel { side: usize },
    InvalidParameter(&'static str),
    ShapeMismatch,
    /// Every pixel has the same intensity.
    DegenerateImage,
    EmptySegmentation,
    NoTarget(Direction),
    PlacementExhausted { class_id: u32, placed: usize, requested: usize },
    PlanSceneMismatch,
    InvalidStride,
    DegenerateBox,
    UnknownSlice,
    TooFewSamples,
    DimensionMismatch,
    NotSymmetric,
    NotPsd { eigenvalue: f64 },
    /// Fréchet distance came out below the clamping tolerance.
    NegativeDistance(f64),
    /// `background_unit_count` is smaller than the number of false positives.
    BackgroundTooSmall { background: u64, false_positives: u64 },
    InvalidSize,
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    /// Stable machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidDimensions { .. } => "invalid_dimensions",
            Error::InvalidKernel { .. } => "invalid_kernel",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::ShapeMismatch => "shape_mismatch",
            Error::DegenerateImage => "degenerate_image",
            Error::EmptySegmentation => "empty_segmentation",
            Error::NoTarget(_) => "no_target",
            Error::PlacementExhausted { .. } => "placement_exhausted",
            Error::PlanSceneMismatch => "plan_scene_mismatch",
            Error::InvalidStride => "invalid_stride",
            Error::DegenerateBox => "degenerate_box",
            Error::UnknownSlice => "unknown_slice",
            Error::TooFewSamples => "too_few_samples",
            Error::DimensionMismatch => "dimension_mismatch",
            Error::NotSymmetric => "not_symmetric",
            Error::NotPsd { .. } => "not_psd",
            Error::NegativeDistance(_) => "negative_distance",
            Error::BackgroundTooSmall { .. } => "background_too_small",
            Error::InvalidSize => "invalid_size",
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidDimensions { width, height, len } => {
                write!(f, "invalid raster dimensions {width}x{height} for {len} samples")
            }
            Error::InvalidKernel { side } => write!(f, "invalid kernel side {side}"),
            Error::InvalidParameter(what) => write!(f, "invalid parameter: {what}"),
            Error::ShapeMismatch => f.write_str("operand shapes differ"),
            Error::DegenerateImage => f.write_str("image has a single intensity"),
            Error::EmptySegmentation => f.write_str("segmentation produced an empty mask"),
            Error::NoTarget(dir) => write!(f, "no line reached the white-pixel threshold scanning {dir}"),
            Error::PlacementExhausted { class_id, placed, requested } => write!(
                f,
                "placement exhausted for class {class_id}: placed {placed} of {requested}"
            ),
            Error::PlanSceneMismatch => f.write_str("placement plan does not fit the scene"),
            Error::InvalidStride => f.write_str("stride must satisfy 0 < stride <= size"),
            Error::DegenerateBox => f.write_str("box has non-positive width or height"),
            Error::UnknownSlice => f.write_str("detection refers to an unknown slice"),
            Error::TooFewSamples => f.write_str("at least two samples are required"),
            Error::DimensionMismatch => f.write_str("feature dimensions differ"),
            Error::NotSymmetric => f.write_str("matrix is not symmetric"),
            Error::NotPsd { eigenvalue } => {
                write!(f, "matrix is not positive semidefinite (eigenvalue {eigenvalue:e})")
            }
            Error::NegativeDistance(v) => write!(f, "Fréchet distance evaluated to {v:e}"),
            Error::BackgroundTooSmall { background, false_positives } => write!(
                f,
                "background unit count {background} is below false-positive count {false_positives}"
            ),
            Error::InvalidSize => f.write_str("requested size does not fit the image"),
        }
    }
}

impl core::error::Error for Error {}
