use std::sync::OnceLock;

use crate::error::{Error, Result};

const BITS: usize = 32;

/// Joe-Kuo direction numbers (`d s a m_1 .. m_s` per line), dimensions 2..=4096.
const JOE_KUO: &str = include_str!("../../data/new-joe-kuo-6.4096");

/// Sobol' sequence with 32-bit direction numbers, random access by index.
#[derive(Clone, Debug)]
pub struct SobolGenerator {
    /// `directions[j][b]` is the direction number for bit `b` of dimension `j`.
    directions: Vec<[u32; BITS]>,
}

impl SobolGenerator {
    /// Generator backed by the bundled direction numbers.
    pub fn new(max_dim: usize) -> Result<Self> {
        static BUNDLED: OnceLock<Vec<[u32; BITS]>> = OnceLock::new();
        let all = BUNDLED.get_or_init(|| parse_directions(JOE_KUO, usize::MAX).expect("bundled direction numbers parse"));
        if max_dim > all.len() {
            return Err(Error::DimensionOverflow { requested: max_dim, max: all.len() });
        }
        Ok(Self { directions: all[..max_dim].to_vec() })
    }

    /// Generator from direction numbers in the standard text format.
    pub fn from_direction_numbers(text: &str, max_dim: usize) -> Result<Self> {
        let directions = parse_directions(text, max_dim)?;
        if directions.len() < max_dim {
            return Err(Error::DimensionOverflow { requested: max_dim, max: directions.len() });
        }
        Ok(Self { directions })
    }

    /// Largest dimension available from the bundled table.
    pub fn max_supported_dim() -> usize {
        JOE_KUO.lines().filter(|l| !l.trim().is_empty()).count()
    }

    pub fn max_dim(&self) -> usize {
        self.directions.len()
    }

    /// Coordinates of point `n` in dimensions `0..dims` as 32-bit fractions.
    ///
    /// Points come in Gray-code order (the order of the usual recursive
    /// generator), computed directly from `n ^ (n >> 1)`.
    pub fn point_bits(&self, n: u32, dims: usize) -> Result<Vec<u32>> {
        if dims > self.max_dim() {
            return Err(Error::DimensionOverflow { requested: dims, max: self.max_dim() });
        }
        let gray = n ^ (n >> 1);
        Ok(self.directions[..dims]
            .iter()
            .map(|v| {
                let mut x = 0u32;
                let mut k = gray;
                let mut b = 0;
                while k != 0 {
                    if k & 1 == 1 {
                        x ^= v[b];
                    }
                    k >>= 1;
                    b += 1;
                }
                x
            })
            .collect())
    }

    /// Point `n` of the unshifted sequence in `[0, 1)^dims`.
    pub fn point(&self, n: u32, dims: usize) -> Result<Vec<f64>> {
        Ok(self.point_bits(n, dims)?.into_iter().map(bits_to_unit).collect())
    }
}

pub(crate) fn bits_to_unit(x: u32) -> f64 {
    x as f64 / 4294967296.0
}

fn parse_directions(text: &str, max_dim: usize) -> Result<Vec<[u32; BITS]>> {
    let mut out = Vec::new();
    let mut first = [0u32; BITS];
    for (b, v) in first.iter_mut().enumerate() {
        *v = 1u32 << (BITS - 1 - b);
    }
    out.push(first);
    for (line_no, line) in text.lines().enumerate() {
        if out.len() >= max_dim {
            break;
        }
        let line = line.trim();
        if line.is_empty() || line.starts_with('d') {
            continue;
        }
        let bad = |msg: &str| Error::DirectionNumbers { line: line_no + 1, msg: msg.to_string() };
        let fields: Vec<u64> = line
            .split_whitespace()
            .map(|t| t.parse::<u64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(&e.to_string()))?;
        if fields.len() < 3 {
            return Err(bad("expected `d s a m_1 .. m_s`"));
        }
        let (s, a) = (fields[1] as usize, fields[2] as u32);
        if s == 0 || s >= BITS || fields.len() != 3 + s {
            return Err(bad("degree and number of initial values disagree"));
        }
        let m = &fields[3..];
        let mut v = [0u32; BITS];
        for b in 0..s {
            if m[b] == 0 || m[b] % 2 == 0 || m[b] >= 1 << (b + 1) {
                return Err(bad("initial direction numbers must be odd and below 2^i"));
            }
            v[b] = (m[b] as u32) << (BITS - 1 - b);
        }
        for b in s..BITS {
            let mut x = v[b - s] ^ (v[b - s] >> s);
            for k in 1..s {
                if (a >> (s - 1 - k)) & 1 == 1 {
                    x ^= v[b - k];
                }
            }
            v[b] = x;
        }
        out.push(v);
    }
    Ok(out)
}
