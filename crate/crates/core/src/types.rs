// Copyright 2026 The cotseg Authors
// SPDX-License-Identifier: Apache-2.0

//! Domain types shared by every stage of the pipeline.
//!
//! Coordinates are normalized floats in `[0, 1]`, x grows rightward, y grows
//! downward and the origin is the top-left corner of the image.

use std::fmt;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Violation of a domain-type invariant at construction time.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum InvariantError {
    #[error("image dimensions must be at least 1x1, got {width}x{height}")]
    EmptyImage { width: u32, height: u32 },
    #[error("buffer length {actual} does not match {width}x{height} (expected {expected})")]
    BufferLength {
        width: u32,
        height: u32,
        expected: usize,
        actual: usize,
    },
    #[error("score value {value} at index {index} is not a finite value in [0,1]")]
    ScoreOutOfRange { index: usize, value: f32 },
    #[error("coordinate ({x}, {y}) lies outside [0,1]^2")]
    CoordOutOfRange { x: f64, y: f64 },
    #[error("{kind} annotation needs {expected} points, got {actual}")]
    Arity {
        kind: ControlKind,
        expected: &'static str,
        actual: usize,
    },
    #[error("query needs non-empty text or a control annotation")]
    EmptyQuery,
    #[error("capabilities must list at least one input type")]
    NoInputTypes,
    #[error("capability description must not be empty")]
    EmptyDescription,
    #[error("a correct verdict must not carry refinement directives")]
    CorrectWithDirectives,
    #[error("an incorrect verdict needs at least one refinement directive")]
    IncorrectWithoutDirectives,
    #[error("summary must be non-empty when the trace has steps")]
    MissingSummary,
    #[error("binarize threshold {0} must lie strictly inside (0,1)")]
    Threshold(f64),
    #[error("fixed CoT length {fixed} exceeds max_cot_rounds {max}")]
    FixedLength { fixed: u32, max: u32 },
}

/// A normalized image-plane coordinate, serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct NormPoint {
    pub x: f64,
    pub y: f64,
}

impl NormPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn in_unit_square(&self) -> bool {
        (0.0..=1.0).contains(&self.x) && (0.0..=1.0).contains(&self.y)
    }
}

impl From<[f64; 2]> for NormPoint {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

impl From<NormPoint> for [f64; 2] {
    fn from(p: NormPoint) -> Self {
        [p.x, p.y]
    }
}

impl fmt::Display for NormPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.3}, {:.3})", self.x, self.y)
    }
}

/// Integer pixel coordinate produced by [`denormalize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PixelPoint {
    pub x: u32,
    pub y: u32,
}

/// Maps normalized coordinates onto pixel indices of a `width x height` grid.
///
/// `pixel = floor(coord * dimension)`, clamped to `[0, dimension - 1]`.
pub fn denormalize(
    coords: &[NormPoint],
    width: u32,
    height: u32,
) -> Result<Vec<PixelPoint>, InvariantError> {
    coords
        .iter()
        .map(|p| {
            if !p.in_unit_square() {
                return Err(InvariantError::CoordOutOfRange { x: p.x, y: p.y });
            }
            Ok(PixelPoint {
                x: scale_axis(p.x, width),
                y: scale_axis(p.y, height),
            })
        })
        .collect()
}

fn scale_axis(coord: f64, dim: u32) -> u32 {
    let v = (coord * f64::from(dim)).floor();
    (v.max(0.0) as u32).min(dim.saturating_sub(1))
}

fn check_dims(width: u32, height: u32, len: usize, per_pixel: usize) -> Result<(), InvariantError> {
    if width == 0 || height == 0 {
        return Err(InvariantError::EmptyImage { width, height });
    }
    let expected = width as usize * height as usize * per_pixel;
    if len != expected {
        return Err(InvariantError::BufferLength {
            width,
            height,
            expected,
            actual: len,
        });
    }
    Ok(())
}

/// Row-major RGB8 image.
#[derive(Clone, PartialEq, Eq)]
pub struct ImageData {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
    source_id: String,
}

impl ImageData {
    pub fn new(
        width: u32,
        height: u32,
        pixels: Vec<u8>,
        source_id: impl Into<String>,
    ) -> Result<Self, InvariantError> {
        check_dims(width, height, pixels.len(), 3)?;
        Ok(Self {
            width,
            height,
            pixels,
            source_id: source_id.into(),
        })
    }

    /// Solid-colour image.
    pub fn filled(
        width: u32,
        height: u32,
        rgb: [u8; 3],
        source_id: impl Into<String>,
    ) -> Result<Self, InvariantError> {
        let pixels = rgb
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 3)
            .collect();
        Self::new(width, height, pixels, source_id)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn with_source_id(mut self, source_id: impl Into<String>) -> Self {
        self.source_id = source_id.into();
        self
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn put_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn same_dims(&self, width: u32, height: u32) -> bool {
        self.width == width && self.height == height
    }
}

impl fmt::Debug for ImageData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ImageData")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("source_id", &self.source_id)
            .finish_non_exhaustive()
    }
}

#[derive(Serialize, Deserialize)]
struct ImageDataRepr {
    width: u32,
    height: u32,
    pixels: String,
    source_id: String,
}

impl Serialize for ImageData {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ImageDataRepr {
            width: self.width,
            height: self.height,
            pixels: B64.encode(&self.pixels),
            source_id: self.source_id.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ImageData {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = ImageDataRepr::deserialize(d)?;
        let pixels = B64.decode(repr.pixels).map_err(serde::de::Error::custom)?;
        ImageData::new(repr.width, repr.height, pixels, repr.source_id)
            .map_err(serde::de::Error::custom)
    }
}

/// Row-major binary mask.
///
/// Serialized with `bits` packed MSB-first into bytes and base64 encoded.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct RasterMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl RasterMask {
    pub fn new(width: u32, height: u32, bits: Vec<bool>) -> Result<Self, InvariantError> {
        check_dims(width, height, bits.len(), 1)?;
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: u32, height: u32) -> Self {
        Self::new(width, height, vec![false; width as usize * height as usize])
            .expect("mask dimensions must be non-zero")
    }

    pub fn full(width: u32, height: u32) -> Self {
        Self::new(width, height, vec![true; width as usize * height as usize])
            .expect("mask dimensions must be non-zero")
    }

    /// Builds a mask by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self::new(width, height, bits).expect("mask dimensions must be non-zero")
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let w = self.width as usize;
        self.bits[y as usize * w + x as usize] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn same_dims(&self, width: u32, height: u32) -> bool {
        self.width == width && self.height == height
    }

    pub fn to_packed(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.bits.len().div_ceil(8)];
        for (i, _) in self.bits.iter().enumerate().filter(|(_, &b)| b) {
            out[i / 8] |= 0x80 >> (i % 8);
        }
        out
    }

    pub fn from_packed(width: u32, height: u32, packed: &[u8]) -> Result<Self, InvariantError> {
        let n = width as usize * height as usize;
        if packed.len() != n.div_ceil(8) {
            return Err(InvariantError::BufferLength {
                width,
                height,
                expected: n.div_ceil(8),
                actual: packed.len(),
            });
        }
        let bits = (0..n)
            .map(|i| packed[i / 8] & (0x80 >> (i % 8)) != 0)
            .collect();
        Self::new(width, height, bits)
    }
}

impl fmt::Debug for RasterMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RasterMask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("set", &self.count())
            .finish()
    }
}

#[derive(Serialize, Deserialize)]
struct MaskRepr {
    width: u32,
    height: u32,
    bits: String,
}

impl Serialize for RasterMask {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        MaskRepr {
            width: self.width,
            height: self.height,
            bits: B64.encode(self.to_packed()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for RasterMask {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = MaskRepr::deserialize(d)?;
        let packed = B64.decode(repr.bits).map_err(serde::de::Error::custom)?;
        RasterMask::from_packed(repr.width, repr.height, &packed).map_err(serde::de::Error::custom)
    }
}

/// Row-major real-valued prediction scores in `[0, 1]`.
///
/// Serialized with `values` as base64 of little-endian `f32` bytes so that
/// round trips are bit-exact.
#[derive(Clone, PartialEq)]
pub struct ScoreMap {
    width: u32,
    height: u32,
    values: Vec<f32>,
}

impl ScoreMap {
    pub fn new(width: u32, height: u32, values: Vec<f32>) -> Result<Self, InvariantError> {
        check_dims(width, height, values.len(), 1)?;
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || !(0.0..=1.0).contains(*v))
        {
            return Err(InvariantError::ScoreOutOfRange { index, value });
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn zeros(width: u32, height: u32) -> Self {
        Self::new(width, height, vec![0.0; width as usize * height as usize])
            .expect("score map dimensions must be non-zero")
    }

    /// `{0,1}`-valued score map of a binary mask.
    pub fn from_mask(mask: &RasterMask) -> Self {
        let values = mask
            .bits()
            .iter()
            .map(|&b| if b { 1.0 } else { 0.0 })
            .collect();
        Self::new(mask.width(), mask.height(), values).expect("mask dimensions are valid")
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn same_dims(&self, width: u32, height: u32) -> bool {
        self.width == width && self.height == height
    }
}

impl fmt::Debug for ScoreMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScoreMap")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

#[derive(Serialize, Deserialize)]
struct ScoreRepr {
    width: u32,
    height: u32,
    values: String,
}

impl Serialize for ScoreMap {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let bytes: Vec<u8> = self.values.iter().flat_map(|v| v.to_le_bytes()).collect();
        ScoreRepr {
            width: self.width,
            height: self.height,
            values: B64.encode(bytes),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ScoreMap {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = ScoreRepr::deserialize(d)?;
        let bytes = B64.decode(repr.values).map_err(serde::de::Error::custom)?;
        if bytes.len() % 4 != 0 {
            return Err(serde::de::Error::custom(
                "score payload is not a whole number of f32 values",
            ));
        }
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        ScoreMap::new(repr.width, repr.height, values).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlKind {
    Points,
    Box,
    Scribble,
    Highlight,
}

impl ControlKind {
    /// Segmenter input type that can carry this annotation directly.
    pub fn input_type(self) -> Option<InputType> {
        match self {
            ControlKind::Points => Some(InputType::Points),
            ControlKind::Box => Some(InputType::Box),
            ControlKind::Scribble => Some(InputType::Scribble),
            ControlKind::Highlight => None,
        }
    }

    fn arity_ok(self, n: usize) -> bool {
        match self {
            ControlKind::Points => n >= 1,
            ControlKind::Box => n == 2,
            ControlKind::Scribble => n >= 2,
            ControlKind::Highlight => n >= 3,
        }
    }

    fn arity_text(self) -> &'static str {
        match self {
            ControlKind::Points => "at least 1",
            ControlKind::Box => "exactly 2",
            ControlKind::Scribble => "at least 2",
            ControlKind::Highlight => "at least 3",
        }
    }
}

impl fmt::Display for ControlKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ControlKind::Points => "points",
            ControlKind::Box => "box",
            ControlKind::Scribble => "scribble",
            ControlKind::Highlight => "highlight",
        })
    }
}

/// Sorts two box corners into (min-corner, max-corner).
pub fn sort_box(a: NormPoint, b: NormPoint) -> [NormPoint; 2] {
    [
        NormPoint::new(a.x.min(b.x), a.y.min(b.y)),
        NormPoint::new(a.x.max(b.x), a.y.max(b.y)),
    ]
}

/// A visual prompt drawn by the user on top of the input image.
///
/// `highlight` is a closed region outline and needs at least three vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlAnnotation {
    kind: ControlKind,
    coords: Vec<NormPoint>,
    #[serde(skip)]
    rendered: Option<ImageData>,
}

impl ControlAnnotation {
    pub fn new(kind: ControlKind, coords: Vec<NormPoint>) -> Result<Self, InvariantError> {
        let mut annotation = Self {
            kind,
            coords,
            rendered: None,
        };
        annotation.validate()?;
        if kind == ControlKind::Box {
            let [lo, hi] = sort_box(annotation.coords[0], annotation.coords[1]);
            annotation.coords = vec![lo, hi];
        }
        Ok(annotation)
    }

    pub fn validate(&self) -> Result<(), InvariantError> {
        if !self.kind.arity_ok(self.coords.len()) {
            return Err(InvariantError::Arity {
                kind: self.kind,
                expected: self.kind.arity_text(),
                actual: self.coords.len(),
            });
        }
        if let Some(p) = self.coords.iter().find(|p| !p.in_unit_square()) {
            return Err(InvariantError::CoordOutOfRange { x: p.x, y: p.y });
        }
        Ok(())
    }

    pub fn kind(&self) -> ControlKind {
        self.kind
    }

    pub fn coords(&self) -> &[NormPoint] {
        &self.coords
    }

    pub fn rendered(&self) -> Option<&ImageData> {
        self.rendered.as_ref()
    }

    pub fn with_rendered(mut self, image: ImageData) -> Self {
        self.rendered = Some(image);
        self
    }
}

/// The user's request: free text, an optional visual annotation, or both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegQuery {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<ControlAnnotation>,
}

impl SegQuery {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            control: None,
        }
    }

    pub fn with_control(mut self, control: ControlAnnotation) -> Self {
        self.control = Some(control);
        self
    }

    pub fn validate(&self) -> Result<(), InvariantError> {
        if self.text.trim().is_empty() && self.control.is_none() {
            return Err(InvariantError::EmptyQuery);
        }
        if let Some(c) = &self.control {
            c.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputType {
    Text,
    Points,
    Box,
    Scribble,
}

impl InputType {
    pub const ALL: [InputType; 4] = [
        InputType::Text,
        InputType::Points,
        InputType::Box,
        InputType::Scribble,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InputType::Text => "text",
            InputType::Points => "points",
            InputType::Box => "box",
            InputType::Scribble => "scribble",
        }
    }
}

impl fmt::Display for InputType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreSemantics {
    Binary,
    Soft,
}

/// What a segmentation backend accepts, handed verbatim to the MLLM agents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentorCapabilities {
    pub input_types: Vec<InputType>,
    pub score_semantics: ScoreSemantics,
    pub multi_object: bool,
    pub description: String,
}

impl SegmentorCapabilities {
    pub fn new(
        input_types: impl IntoIterator<Item = InputType>,
        score_semantics: ScoreSemantics,
        multi_object: bool,
        description: impl Into<String>,
    ) -> Result<Self, InvariantError> {
        let mut types: Vec<InputType> = input_types.into_iter().collect();
        types.sort();
        types.dedup();
        let caps = Self {
            input_types: types,
            score_semantics,
            multi_object,
            description: description.into(),
        };
        caps.validate()?;
        Ok(caps)
    }

    pub fn validate(&self) -> Result<(), InvariantError> {
        if self.input_types.is_empty() {
            return Err(InvariantError::NoInputTypes);
        }
        if self.description.trim().is_empty() {
            return Err(InvariantError::EmptyDescription);
        }
        Ok(())
    }

    pub fn supports(&self, t: InputType) -> bool {
        self.input_types.contains(&t)
    }
}

/// Explicit instruction compiled for the segmenter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaQuery {
    pub input_type: InputType,
    pub prompt: String,
    #[serde(default)]
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coords: Option<Vec<NormPoint>>,
}

impl MetaQuery {
    pub fn text(prompt: impl Into<String>, labels: Vec<String>) -> Self {
        Self {
            input_type: InputType::Text,
            prompt: prompt.into(),
            labels,
            coords: None,
        }
    }

    /// Spatial meta-query; box corners are sorted into (min, max).
    pub fn spatial(
        input_type: InputType,
        prompt: impl Into<String>,
        labels: Vec<String>,
        coords: Vec<NormPoint>,
    ) -> Self {
        let coords = if input_type == InputType::Box && coords.len() == 2 {
            sort_box(coords[0], coords[1]).to_vec()
        } else {
            coords
        };
        Self {
            input_type,
            prompt: prompt.into(),
            labels,
            coords: Some(coords),
        }
    }
}

/// Machine-readable reason a meta-query is not acceptable to a segmenter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Error)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    #[error("unsupported_input_type")]
    UnsupportedInputType,
    #[error("missing_coords")]
    MissingCoords,
    #[error("empty_prompt")]
    EmptyPrompt,
    #[error("unexpected_coords")]
    UnexpectedCoords,
    #[error("coords_out_of_range")]
    CoordsOutOfRange,
}

impl RejectReason {
    pub fn code(self) -> &'static str {
        match self {
            RejectReason::UnsupportedInputType => "unsupported_input_type",
            RejectReason::MissingCoords => "missing_coords",
            RejectReason::EmptyPrompt => "empty_prompt",
            RejectReason::UnexpectedCoords => "unexpected_coords",
            RejectReason::CoordsOutOfRange => "coords_out_of_range",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        [
            RejectReason::UnsupportedInputType,
            RejectReason::MissingCoords,
            RejectReason::EmptyPrompt,
            RejectReason::UnexpectedCoords,
            RejectReason::CoordsOutOfRange,
        ]
        .into_iter()
        .find(|r| r.code() == code)
    }
}

/// Checks a meta-query against the segmenter it is addressed to.
///
/// Coordinate arity follows the annotation rules: points need at least one
/// pair, a box exactly two, a scribble at least two. Anything short of that
/// is `missing_coords`.
pub fn validate_meta_query(
    mq: &MetaQuery,
    caps: &SegmentorCapabilities,
) -> Result<(), RejectReason> {
    if !caps.supports(mq.input_type) {
        return Err(RejectReason::UnsupportedInputType);
    }
    match (mq.input_type, &mq.coords) {
        (InputType::Text, None) => {
            if mq.prompt.trim().is_empty() {
                return Err(RejectReason::EmptyPrompt);
            }
        }
        (InputType::Text, Some(_)) => return Err(RejectReason::UnexpectedCoords),
        (_, None) => return Err(RejectReason::MissingCoords),
        (kind, Some(coords)) => {
            let ok = match kind {
                InputType::Points => !coords.is_empty(),
                InputType::Box => coords.len() == 2,
                InputType::Scribble => coords.len() >= 2,
                InputType::Text => unreachable!(),
            };
            if !ok {
                return Err(RejectReason::MissingCoords);
            }
            if coords.iter().any(|p| !p.in_unit_square()) {
                return Err(RejectReason::CoordsOutOfRange);
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CotStep {
    pub question: String,
    pub answer: String,
}

/// Ordered question/answer pairs and the closing summary.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoTTrace {
    pub steps: Vec<CotStep>,
    pub summary: String,
}

impl CoTTrace {
    pub fn validate(&self) -> Result<(), InvariantError> {
        if !self.steps.is_empty() && self.summary.trim().is_empty() {
            return Err(InvariantError::MissingSummary);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn truncate(&mut self, max: usize) {
        self.steps.truncate(max);
    }
}

/// The evaluator's judgement of a candidate mask.
///
/// `correct == true` means no refinement is needed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VerdictRepr")]
pub struct EvalVerdict {
    reasoning: String,
    correct: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    positive: Option<MetaQuery>,
    #[serde(skip_serializing_if = "Option::is_none")]
    negative: Option<MetaQuery>,
}

#[derive(Deserialize)]
struct VerdictRepr {
    reasoning: String,
    correct: bool,
    #[serde(default)]
    positive: Option<MetaQuery>,
    #[serde(default)]
    negative: Option<MetaQuery>,
}

impl TryFrom<VerdictRepr> for EvalVerdict {
    type Error = InvariantError;

    fn try_from(r: VerdictRepr) -> Result<Self, Self::Error> {
        if r.correct {
            if r.positive.is_some() || r.negative.is_some() {
                return Err(InvariantError::CorrectWithDirectives);
            }
            Ok(EvalVerdict::accept(r.reasoning))
        } else {
            EvalVerdict::reject(r.reasoning, r.positive, r.negative)
        }
    }
}

impl EvalVerdict {
    pub fn accept(reasoning: impl Into<String>) -> Self {
        Self {
            reasoning: reasoning.into(),
            correct: true,
            positive: None,
            negative: None,
        }
    }

    pub fn reject(
        reasoning: impl Into<String>,
        positive: Option<MetaQuery>,
        negative: Option<MetaQuery>,
    ) -> Result<Self, InvariantError> {
        if positive.is_none() && negative.is_none() {
            return Err(InvariantError::IncorrectWithoutDirectives);
        }
        Ok(Self {
            reasoning: reasoning.into(),
            correct: false,
            positive,
            negative,
        })
    }

    pub fn reasoning(&self) -> &str {
        &self.reasoning
    }

    pub fn correct(&self) -> bool {
        self.correct
    }

    pub fn positive(&self) -> Option<&MetaQuery> {
        self.positive.as_ref()
    }

    pub fn negative(&self) -> Option<&MetaQuery> {
        self.negative.as_ref()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CotLengthMode {
    /// The reasoner is told to use exactly `n` question/answer pairs.
    Fixed(u32),
    /// The model decides, capped at `max_cot_rounds`.
    Variational,
}

impl fmt::Display for CotLengthMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CotLengthMode::Fixed(n) => write!(f, "fixed({n})"),
            CotLengthMode::Variational => f.write_str("variational"),
        }
    }
}

impl std::str::FromStr for CotLengthMode {
    type Err = String;

    /// Accepts `variational`, `fixed(n)` or a bare integer `n`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("variational") {
            return Ok(CotLengthMode::Variational);
        }
        let inner = s
            .strip_prefix("fixed(")
            .and_then(|r| r.strip_suffix(')'))
            .unwrap_or(s);
        inner
            .trim()
            .parse::<u32>()
            .map(CotLengthMode::Fixed)
            .map_err(|_| {
                format!("invalid CoT length mode `{s}`: expected `variational`, `fixed(n)` or `n`")
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub max_cot_rounds: u32,
    pub cot_length_mode: CotLengthMode,
    pub max_refine_rounds: u32,
    pub binarize_threshold: f64,
    pub retrieval_enabled: bool,
    pub revert_enabled: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            max_cot_rounds: 8,
            cot_length_mode: CotLengthMode::Variational,
            max_refine_rounds: 2,
            binarize_threshold: 0.5,
            retrieval_enabled: false,
            revert_enabled: true,
        }
    }
}

impl PipelineConfig {
    /// Configuration for the ablation where the model names the target directly.
    pub fn no_cot() -> Self {
        Self {
            max_cot_rounds: 0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), InvariantError> {
        let t = self.binarize_threshold;
        if !(t > 0.0 && t < 1.0) {
            return Err(InvariantError::Threshold(t));
        }
        if let CotLengthMode::Fixed(n) = self.cot_length_mode {
            if n > self.max_cot_rounds {
                return Err(InvariantError::FixedLength {
                    fixed: n,
                    max: self.max_cot_rounds,
                });
            }
        }
        Ok(())
    }

    pub fn cot_enabled(&self) -> bool {
        self.max_cot_rounds > 0
    }
}
