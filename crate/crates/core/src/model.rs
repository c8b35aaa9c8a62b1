//! Layer shapes, the blocking-string schedule representation and its
//! validation against a layer.
//!
//! A blocking string lists loops from innermost to outermost. Each loop
//! carries the *cumulative* extent of its dimension covered up to and
//! including that loop, so `X(4) ... X(16)` means an inner x loop of 4
//! iterations and an outer x loop of 16 / 4 = 4 iterations stepping by 4.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One loop dimension of the convolution nest (plus the batch dimension).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dim {
    X,
    Y,
    C,
    K,
    Fw,
    Fh,
    N,
}

impl Dim {
    pub const ALL: [Dim; 7] = [Dim::X, Dim::Y, Dim::C, Dim::K, Dim::Fw, Dim::Fh, Dim::N];

    pub fn name(self) -> &'static str {
        match self {
            Dim::X => "X",
            Dim::Y => "Y",
            Dim::C => "C",
            Dim::K => "K",
            Dim::Fw => "Fw",
            Dim::Fh => "Fh",
            Dim::N => "N",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Window dimensions may appear at most once in a string.
    pub fn is_window(self) -> bool {
        matches!(self, Dim::Fw | Dim::Fh)
    }
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn default_batch() -> u64 {
    1
}

fn default_element_bits() -> u32 {
    16
}

/// Problem dimensions of one convolutional (or fully connected) layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerShape {
    pub x: u64,
    pub y: u64,
    pub c: u64,
    pub k: u64,
    pub fw: u64,
    pub fh: u64,
    #[serde(default = "default_batch")]
    pub n: u64,
    #[serde(default = "default_element_bits")]
    pub element_bits: u32,
}

impl LayerShape {
    /// Builds a single-image, 16-bit layer from `(x, y, c, k, fw, fh)`.
    pub fn new(x: u64, y: u64, c: u64, k: u64, fw: u64, fh: u64) -> Result<Self> {
        Self::with_batch(x, y, c, k, fw, fh, 1)
    }

    pub fn with_batch(x: u64, y: u64, c: u64, k: u64, fw: u64, fh: u64, n: u64) -> Result<Self> {
        let layer = LayerShape {
            x,
            y,
            c,
            k,
            fw,
            fh,
            n,
            element_bits: 16,
        };
        layer.check()?;
        Ok(layer)
    }

    pub fn check(&self) -> Result<()> {
        for d in Dim::ALL {
            if self.dim(d) == 0 {
                return Err(Error::InvalidLayer(format!("dimension {d} must be >= 1")));
            }
        }
        if self.fw > self.x || self.fh > self.y {
            return Err(Error::InvalidLayer(format!(
                "kernel window {}x{} larger than image {}x{}",
                self.fw, self.fh, self.x, self.y
            )));
        }
        if self.element_bits == 0 || self.element_bits % 8 != 0 {
            return Err(Error::InvalidLayer(format!(
                "element_bits {} is not a positive multiple of 8",
                self.element_bits
            )));
        }
        Ok(())
    }

    pub fn dim(&self, d: Dim) -> u64 {
        match d {
            Dim::X => self.x,
            Dim::Y => self.y,
            Dim::C => self.c,
            Dim::K => self.k,
            Dim::Fw => self.fw,
            Dim::Fh => self.fh,
            Dim::N => self.n,
        }
    }

    pub fn total_macs(&self) -> u64 {
        Dim::ALL.iter().map(|&d| self.dim(d)).product()
    }

    pub fn bytes_per_element(&self) -> u64 {
        u64::from(self.element_bits / 8)
    }
}

/// A layer document as stored in JSON: the shape plus a name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDoc {
    pub name: String,
    #[serde(flatten)]
    pub shape: LayerShape,
}

/// The benchmark layers used throughout the tool. Fully connected layers
/// are encoded with unit image and window dimensions.
pub fn builtin_benchmarks() -> BTreeMap<&'static str, LayerShape> {
    let raw: [(&str, [u64; 6]); 7] = [
        ("conv1", [256, 256, 256, 384, 11, 11]),
        ("conv2", [500, 375, 32, 48, 9, 9]),
        ("conv3", [32, 32, 108, 200, 4, 4]),
        ("conv4", [56, 56, 128, 256, 3, 3]),
        ("conv5", [28, 28, 256, 512, 3, 3]),
        ("fc1", [1, 1, 200, 100, 1, 1]),
        ("fc2", [1, 1, 4096, 4096, 1, 1]),
    ];
    raw.into_iter()
        .map(|(name, [x, y, c, k, fw, fh])| {
            let layer = LayerShape::new(x, y, c, k, fw, fh).expect("builtin layer is valid");
            (name, layer)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Loop {
    pub dim: Dim,
    pub extent: u64,
}

impl Loop {
    pub fn new(dim: Dim, extent: u64) -> Self {
        Loop { dim, extent }
    }
}

impl fmt::Display for Loop {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.dim, self.extent)
    }
}

/// Ordered loop sequence, index 0 innermost.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockingString {
    loops: Vec<Loop>,
}

impl BlockingString {
    pub fn new(loops: Vec<Loop>) -> Self {
        BlockingString { loops }
    }

    /// `Fw Fh X Y C K` (and `N` outermost when batching), every loop at full extent.
    pub fn unblocked(layer: &LayerShape) -> Self {
        let mut loops: Vec<Loop> = [Dim::Fw, Dim::Fh, Dim::X, Dim::Y, Dim::C, Dim::K]
            .into_iter()
            .map(|d| Loop::new(d, layer.dim(d)))
            .collect();
        if layer.n > 1 {
            loops.push(Loop::new(Dim::N, layer.n));
        }
        BlockingString { loops }
    }

    pub fn loops(&self) -> &[Loop] {
        &self.loops
    }

    pub fn len(&self) -> usize {
        self.loops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loops.is_empty()
    }

    pub fn into_loops(self) -> Vec<Loop> {
        self.loops
    }

    /// Per-loop trip counts, `extent / previous extent of the same dim`.
    /// Only meaningful for strings that passed validation.
    pub fn trip_counts(&self) -> Vec<u64> {
        let mut prev = [1u64; 7];
        self.loops
            .iter()
            .map(|l| {
                let p = &mut prev[l.dim.index()];
                let t = l.extent / *p;
                *p = l.extent;
                t
            })
            .collect()
    }

    /// Parses `Fw(3) Fh(3) X(4) ...`. Whitespace between loops is optional.
    pub fn parse(text: &str) -> Result<Self> {
        let bytes = text.as_bytes();
        let mut pos = 0;
        let mut loops = Vec::new();
        let skip_ws = |pos: &mut usize| {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
        };
        skip_ws(&mut pos);
        while pos < bytes.len() {
            let start = pos;
            let dim = match bytes[pos] {
                b'X' => Dim::X,
                b'Y' => Dim::Y,
                b'C' => Dim::C,
                b'K' => Dim::K,
                b'N' => Dim::N,
                b'F' => {
                    pos += 1;
                    match bytes.get(pos) {
                        Some(b'w') => Dim::Fw,
                        Some(b'h') => Dim::Fh,
                        _ => {
                            return Err(Error::Syntax {
                                pos,
                                msg: "expected `w` or `h` after `F`".into(),
                            })
                        }
                    }
                }
                _ => {
                    return Err(Error::Syntax {
                        pos,
                        msg: format!("expected a dimension name, found `{}`", text[pos..].chars().next().unwrap_or(' ')),
                    })
                }
            };
            pos += 1;
            if bytes.get(pos) != Some(&b'(') {
                return Err(Error::Syntax {
                    pos,
                    msg: "expected `(`".into(),
                });
            }
            pos += 1;
            let num_start = pos;
            let negative = bytes.get(pos) == Some(&b'-');
            if negative {
                pos += 1;
            }
            let digits_start = pos;
            while pos < bytes.len() && bytes[pos].is_ascii_digit() {
                pos += 1;
            }
            if pos == digits_start {
                return Err(Error::Syntax {
                    pos,
                    msg: "expected an integer extent".into(),
                });
            }
            if negative {
                return Err(Error::NonPositiveExtent { pos: num_start });
            }
            let extent: u64 = text[digits_start..pos].parse().map_err(|_| Error::Syntax {
                pos: digits_start,
                msg: "extent out of range".into(),
            })?;
            if extent == 0 {
                return Err(Error::NonPositiveExtent { pos: num_start });
            }
            if bytes.get(pos) != Some(&b')') {
                return Err(Error::Syntax {
                    pos,
                    msg: "expected `)`".into(),
                });
            }
            pos += 1;
            loops.push(Loop::new(dim, extent));
            debug_assert!(pos > start);
            skip_ws(&mut pos);
        }
        Ok(BlockingString { loops })
    }

    /// Canonical text: loops separated by single spaces; empty string for no loops.
    pub fn render(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for BlockingString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, l) in self.loops.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

impl FromStr for BlockingString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BlockingString::parse(s)
    }
}

impl Serialize for BlockingString {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.render())
    }
}

impl<'de> Deserialize<'de> for BlockingString {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        BlockingString::parse(&text).map_err(serde::de::Error::custom)
    }
}

/// One reason a string does not describe a complete, exact tiling of a layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    Empty,
    NotIncreasing { pos: usize, dim: Dim, extent: u64, previous: u64 },
    NotDivisor { pos: usize, dim: Dim, extent: u64, previous: u64 },
    FinalExtent { pos: usize, dim: Dim, extent: u64, expected: u64 },
    Missing { dim: Dim, expected: u64 },
    WindowSplit { pos: usize, dim: Dim },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Violation::Empty => write!(f, "empty string"),
            Violation::NotIncreasing { pos, dim, extent, previous } => write!(
                f,
                "loop {pos} {dim}({extent}): extent does not exceed previous {dim} extent {previous}"
            ),
            Violation::NotDivisor { pos, dim, extent, previous } => write!(
                f,
                "loop {pos} {dim}({extent}): previous {dim} extent {previous} does not divide {extent}"
            ),
            Violation::FinalExtent { pos, dim, extent, expected } => write!(
                f,
                "loop {pos} {dim}({extent}): final {dim} extent must equal layer dimension {expected}"
            ),
            Violation::Missing { dim, expected } => {
                write!(f, "dimension {dim} (size {expected}) has no loop")
            }
            Violation::WindowSplit { pos, dim } => {
                write!(f, "loop {pos}: window dimension {dim} appears more than once")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            Err(Error::InvalidBlocking(self.violations))
        }
    }
}

/// Checks the divisor-chain and coverage rules. Dimensions of size one may
/// be omitted from the string.
pub fn validate_blocking(bs: &BlockingString, layer: &LayerShape) -> ValidationReport {
    let mut violations = Vec::new();
    if bs.is_empty() {
        violations.push(Violation::Empty);
    }
    let mut prev = [1u64; 7];
    let mut seen = [0usize; 7];
    let mut last_pos = [usize::MAX; 7];
    for (pos, l) in bs.loops().iter().enumerate() {
        let di = l.dim.index();
        seen[di] += 1;
        if l.dim.is_window() && seen[di] > 1 {
            violations.push(Violation::WindowSplit { pos, dim: l.dim });
        }
        let p = prev[di];
        if seen[di] > 1 && l.extent <= p {
            violations.push(Violation::NotIncreasing {
                pos,
                dim: l.dim,
                extent: l.extent,
                previous: p,
            });
        } else if l.extent % p != 0 {
            violations.push(Violation::NotDivisor {
                pos,
                dim: l.dim,
                extent: l.extent,
                previous: p,
            });
        }
        prev[di] = l.extent;
        last_pos[di] = pos;
    }
    for d in Dim::ALL {
        let di = d.index();
        let expected = layer.dim(d);
        if seen[di] == 0 {
            if expected != 1 {
                violations.push(Violation::Missing { dim: d, expected });
            }
        } else if prev[di] != expected {
            violations.push(Violation::FinalExtent {
                pos: last_pos[di],
                dim: d,
                extent: prev[di],
                expected,
            });
        }
    }
    ValidationReport { violations }
}

/// Divisors of `n` in increasing order.
pub fn divisors(n: u64) -> Vec<u64> {
    let mut small = Vec::new();
    let mut large = Vec::new();
    let mut d = 1;
    while d * d <= n {
        if n % d == 0 {
            small.push(d);
            if d * d != n {
                large.push(n / d);
            }
        }
        d += 1;
    }
    small.extend(large.into_iter().rev());
    small
}

/// A uniformly shuffled valid string: every dimension is split into at most
/// `max_splits` occurrences along a random divisor chain (window dimensions
/// stay whole), and unit dimensions are included at random.
pub fn random_blocking<R: rand::Rng + ?Sized>(layer: &LayerShape, max_splits: usize, rng: &mut R) -> BlockingString {
    let mut per_dim: Vec<Vec<Loop>> = Vec::new();
    for d in Dim::ALL {
        let size = layer.dim(d);
        if size == 1 {
            if rng.gen_bool(0.5) {
                per_dim.push(vec![Loop::new(d, 1)]);
            }
            continue;
        }
        let splits = if d.is_window() { 1 } else { rng.gen_range(1..=max_splits.max(1)) };
        let mut chain = Vec::new();
        let mut cur = 1;
        for _ in 1..splits {
            let next: Vec<u64> = divisors(size).into_iter().filter(|&m| m > cur && m < size && m % cur == 0).collect();
            if next.is_empty() {
                break;
            }
            cur = next[rng.gen_range(0..next.len())];
            chain.push(Loop::new(d, cur));
        }
        chain.push(Loop::new(d, size));
        per_dim.push(chain);
    }
    let mut remaining: usize = per_dim.iter().map(Vec::len).sum();
    let mut heads = vec![0usize; per_dim.len()];
    let mut loops = Vec::with_capacity(remaining);
    while remaining > 0 {
        // Picking a dimension with probability proportional to its remaining
        // loops gives a uniform interleaving.
        let mut r = rng.gen_range(0..remaining);
        let di = (0..per_dim.len())
            .find(|&i| {
                let left = per_dim[i].len() - heads[i];
                if r < left {
                    true
                } else {
                    r -= left;
                    false
                }
            })
            .unwrap();
        loops.push(per_dim[di][heads[di]]);
        heads[di] += 1;
        remaining -= 1;
    }
    BlockingString::new(loops)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer8() -> LayerShape {
        LayerShape::new(8, 8, 4, 4, 3, 3).unwrap()
    }

    #[test]
    fn parses_unblocked_string() {
        let bs = BlockingString::parse("Fw(3) Fh(3) X(8) Y(8) C(4) K(4)").unwrap();
        assert_eq!(bs.len(), 6);
        let dims: Vec<Dim> = bs.loops().iter().map(|l| l.dim).collect();
        assert_eq!(dims, [Dim::Fw, Dim::Fh, Dim::X, Dim::Y, Dim::C, Dim::K]);
    }

    #[test]
    fn parses_split_k() {
        let bs = BlockingString::parse("Fw(3) Fh(3) X(4) Y(4) C(4) K(2) K(4)").unwrap();
        assert_eq!(bs.len(), 7);
        assert_eq!(bs.loops()[5], Loop::new(Dim::K, 2));
        assert_eq!(bs.loops()[6], Loop::new(Dim::K, 4));
        assert_eq!(bs.trip_counts(), vec![3, 3, 4, 4, 4, 2, 2]);
    }

    #[test]
    fn rejects_zero_and_negative_extents() {
        assert!(matches!(
            BlockingString::parse("X(0)"),
            Err(Error::NonPositiveExtent { pos: 2 })
        ));
        assert!(matches!(
            BlockingString::parse("Fw(3) X(-2)"),
            Err(Error::NonPositiveExtent { .. })
        ));
    }

    #[test]
    fn syntax_errors_report_position() {
        match BlockingString::parse("Fw(3) Q(2)") {
            Err(Error::Syntax { pos, .. }) => assert_eq!(pos, 6),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(BlockingString::parse("X(4"), Err(Error::Syntax { pos: 3, .. })));
        assert!(matches!(BlockingString::parse("Fz(4)"), Err(Error::Syntax { pos: 1, .. })));
    }

    #[test]
    fn renders_canonically() {
        let bs = BlockingString::parse("  Fw(3)Fh(3)   X(8) Y(8) C(4) K(4) ").unwrap();
        assert_eq!(bs.render(), "Fw(3) Fh(3) X(8) Y(8) C(4) K(4)");
        assert_eq!(BlockingString::default().render(), "");
        for t in [
            "Fw(3) Fh(3) X(8) Y(8) C(4) K(4)",
            "Fw(3) Fh(3) X(4) Y(4) C(4) K(2) K(4)",
        ] {
            assert_eq!(BlockingString::parse(t).unwrap().render(), t);
        }
    }

    #[test]
    fn validation_accepts_unblocked() {
        let bs = BlockingString::unblocked(&layer8());
        assert!(validate_blocking(&bs, &layer8()).is_ok());
    }

    #[test]
    fn validation_flags_broken_divisor_chain() {
        let bs = BlockingString::parse("Fw(3) Fh(3) X(8) Y(8) C(4) K(3) K(4)").unwrap();
        let r = validate_blocking(&bs, &layer8());
        assert_eq!(
            r.violations,
            vec![Violation::NotDivisor { pos: 6, dim: Dim::K, extent: 4, previous: 3 }]
        );
    }

    #[test]
    fn validation_flags_incomplete_coverage() {
        let bs = BlockingString::parse("Fw(3) Fh(3) X(4) Y(8) C(4) K(4)").unwrap();
        let r = validate_blocking(&bs, &layer8());
        assert_eq!(
            r.violations,
            vec![Violation::FinalExtent { pos: 2, dim: Dim::X, extent: 4, expected: 8 }]
        );
    }

    #[test]
    fn validation_rejects_empty_and_split_window() {
        assert!(!validate_blocking(&BlockingString::default(), &LayerShape::new(1, 1, 1, 1, 1, 1).unwrap()).is_ok());
        let bs = BlockingString::parse("Fw(1) Fw(3) Fh(3) X(8) Y(8) C(4) K(4)").unwrap();
        let r = validate_blocking(&bs, &layer8());
        assert!(r.violations.contains(&Violation::WindowSplit { pos: 1, dim: Dim::Fw }));
    }

    #[test]
    fn divisor_list() {
        assert_eq!(divisors(12), vec![1, 2, 3, 4, 6, 12]);
        assert_eq!(divisors(1), vec![1]);
        assert_eq!(divisors(49), vec![1, 7, 49]);
    }

    #[test]
    fn random_strings_are_valid() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let layer = LayerShape::with_batch(12, 8, 6, 4, 3, 1, 2).unwrap();
        for _ in 0..200 {
            let bs = random_blocking(&layer, 3, &mut rng);
            assert!(validate_blocking(&bs, &layer).is_ok(), "{bs}");
            assert_eq!(bs.trip_counts().iter().product::<u64>(), layer.total_macs());
        }
    }

    #[test]
    fn unit_dimensions_may_be_omitted() {
        let fc = LayerShape::new(1, 1, 8, 4, 1, 1).unwrap();
        let bs = BlockingString::parse("C(2) K(4) C(8)").unwrap();
        assert!(validate_blocking(&bs, &fc).is_ok());
        let missing = BlockingString::parse("C(8)").unwrap();
        assert_eq!(
            validate_blocking(&missing, &fc).violations,
            vec![Violation::Missing { dim: Dim::K, expected: 4 }]
        );
    }

    #[test]
    fn builtin_table_dimensions() {
        let b = builtin_benchmarks();
        assert_eq!(b.len(), 7);
        let c1 = b["conv1"];
        assert_eq!((c1.x, c1.y, c1.c, c1.k, c1.fw, c1.fh), (256, 256, 256, 384, 11, 11));
        let c4 = b["conv4"];
        assert_eq!((c4.x, c4.y, c4.c, c4.k, c4.fw, c4.fh), (56, 56, 128, 256, 3, 3));
        let f2 = b["fc2"];
        assert_eq!((f2.x, f2.y, f2.c, f2.k, f2.fw, f2.fh), (1, 1, 4096, 4096, 1, 1));
        assert_eq!(c4.total_macs(), 924_844_032);
    }

    #[test]
    fn layer_rejects_bad_shapes() {
        assert!(LayerShape::new(0, 1, 1, 1, 1, 1).is_err());
        assert!(LayerShape::new(2, 2, 1, 1, 3, 1).is_err());
        let mut l = layer8();
        l.element_bits = 12;
        assert!(l.check().is_err());
    }

    #[test]
    fn layer_doc_json() {
        let doc: LayerDoc = serde_json::from_str(
            r#"{"name":"t","x":8,"y":8,"c":4,"k":4,"fw":3,"fh":3,"n":1}"#,
        )
        .unwrap();
        assert_eq!(doc.shape, layer8());
        assert_eq!(doc.name, "t");
    }
}
