//! Bit-exact text serialization for named f64 tensors.
//!
//! Values are stored as the hex of their IEEE-754 bit patterns, so a
//! round trip reproduces every parameter exactly.

use crate::error::{Error, Result};

/// FNV-1a digest, used for compact model-snapshot fingerprints in reports.
pub fn fnv64(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn dump_tensor(out: &mut String, name: &str, rows: usize, cols: usize, data: &[f64]) {
    assert_eq!(rows * cols, data.len());
    out.push_str(&format!("tensor {name} {rows} {cols}\n"));
    for chunk in data.chunks(8) {
        let line: Vec<String> = chunk.iter().map(|v| format!("{:016x}", v.to_bits())).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
}

/// Line-oriented reader over a serialized dump.
pub struct Reader<'a> {
    lines: std::iter::Peekable<std::str::Lines<'a>>,
}

impl<'a> Reader<'a> {
    pub fn new(text: &'a str) -> Self {
        Reader {
            lines: text.lines().peekable(),
        }
    }

    pub fn next_line(&mut self) -> Result<&'a str> {
        self.lines
            .next()
            .ok_or_else(|| Error::Parse("unexpected end of model dump".into()))
    }

    pub fn peek_line(&mut self) -> Option<&'a str> {
        self.lines.peek().copied()
    }

    /// Expect a line starting with `keyword`; return the remaining tokens.
    pub fn expect(&mut self, keyword: &str) -> Result<Vec<&'a str>> {
        let line = self.next_line()?;
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some(k) if k == keyword => Ok(toks.collect()),
            other => Err(Error::Parse(format!(
                "expected `{keyword}`, found `{}`",
                other.unwrap_or("")
            ))),
        }
    }

    /// Read a `tensor <name> <rows> <cols>` header plus its payload.
    pub fn read_tensor(&mut self, name: &str) -> Result<(usize, usize, Vec<f64>)> {
        let toks = self.expect("tensor")?;
        if toks.len() != 3 || toks[0] != name {
            return Err(Error::Parse(format!("expected tensor `{name}`")));
        }
        let rows: usize = toks[1]
            .parse()
            .map_err(|_| Error::Parse("bad tensor rows".into()))?;
        let cols: usize = toks[2]
            .parse()
            .map_err(|_| Error::Parse("bad tensor cols".into()))?;
        let total = rows * cols;
        let mut data = Vec::with_capacity(total);
        while data.len() < total {
            let line = self.next_line()?;
            for tok in line.split_whitespace() {
                let bits = u64::from_str_radix(tok, 16)
                    .map_err(|_| Error::Parse(format!("bad tensor value `{tok}`")))?;
                data.push(f64::from_bits(bits));
            }
        }
        if data.len() != total {
            return Err(Error::Parse(format!("tensor `{name}` has wrong size")));
        }
        Ok((rows, cols, data))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_round_trip_is_bit_exact() {
        let data = vec![0.1, -2.5e-300, f64::MIN_POSITIVE, 3.0, -0.0, 1e300];
        let mut s = String::new();
        dump_tensor(&mut s, "w", 2, 3, &data);
        let mut r = Reader::new(&s);
        let (rows, cols, back) = r.read_tensor("w").unwrap();
        assert_eq!((rows, cols), (2, 3));
        assert_eq!(
            back.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            data.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}
