//! Text formats: coefficient files, spectral data files, inverse-run
//! manifests and CSV tables.
//!
//! Coefficient file:
//!
//! ```text
//! n = 4
//! [tau0]
//! antiderivative = true
//! breakpoints = 0 0.5 1
//! piece = 0 0 1 0
//! piece = 0.5 0 -1 0
//! [tau1]
//! ...
//! ```
//!
//! Each `piece` line lists real and imaginary parts of the coefficients in
//! ascending powers of `x - a`, `a` the left end of the piece. Lines starting
//! with `#` are comments.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::coefficients::CoefficientSet;
use crate::error::{Error, Result};
use crate::forward::{Provenance, SpectralData, SpectralEntry};
use crate::poly::Function1D;
use crate::C64;

/// Shortest-safe round-trip formatting: 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io { path: path.display().to_string(), source })
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|_| Error::Input(format!("bad number {s:?} in {what}")))
}

fn write_function(out: &mut String, f: &Function1D) {
    let br: Vec<String> = f.breaks().iter().map(|&b| fmt_f64(b)).collect();
    let _ = writeln!(out, "breakpoints = {}", br.join(" "));
    for p in f.pieces() {
        let cs: Vec<String> = p.iter().flat_map(|c| [fmt_f64(c.re), fmt_f64(c.im)]).collect();
        let _ = writeln!(out, "piece = {}", cs.join(" "));
    }
}

pub fn format_coefficients(c: &CoefficientSet) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "n = {}", c.order());
    out.push_str("[tau0]\nantiderivative = true\n");
    write_function(&mut out, c.tau0_antiderivative());
    for nu in 1..=c.order() - 2 {
        let _ = writeln!(out, "[tau{nu}]");
        write_function(&mut out, c.tau(nu));
    }
    out
}

#[derive(Default)]
struct Block {
    antiderivative: Option<bool>,
    breaks: Option<Vec<f64>>,
    pieces: Vec<Vec<C64>>,
}

impl Block {
    fn into_function(self, name: &str) -> Result<Function1D> {
        let breaks = self.breaks.ok_or_else(|| Error::Input(format!("[{name}] has no breakpoints")))?;
        Function1D::new(breaks, self.pieces).map_err(|e| Error::Input(format!("[{name}]: {e}")))
    }
}

pub fn parse_coefficients(text: &str) -> Result<CoefficientSet> {
    let mut n: Option<usize> = None;
    let mut blocks: BTreeMap<usize, Block> = BTreeMap::new();
    let mut current: Option<usize> = None;
    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let at = |msg: &str| Error::Input(format!("line {}: {msg}", no + 1));
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let nu = name
                .strip_prefix("tau")
                .and_then(|s| s.parse::<usize>().ok())
                .ok_or_else(|| at("expected a [tau<nu>] header"))?;
            if blocks.insert(nu, Block::default()).is_some() {
                return Err(at("duplicate block"));
            }
            current = Some(nu);
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| at("expected key = value"))?;
        let (key, value) = (key.trim(), value.trim());
        match (current, key) {
            (None, "n") => n = Some(value.parse().map_err(|_| at("bad order"))?),
            (None, _) => return Err(at("unknown top-level key")),
            (Some(nu), _) => {
                let b = blocks.get_mut(&nu).expect("block exists");
                match key {
                    "antiderivative" if nu == 0 => {
                        b.antiderivative = Some(match value {
                            "true" => true,
                            "false" => false,
                            _ => return Err(at("antiderivative must be true or false")),
                        })
                    }
                    "breakpoints" => {
                        b.breaks =
                            Some(value.split_whitespace().map(|s| parse_f64(s, "breakpoints")).collect::<Result<_>>()?)
                    }
                    "piece" => {
                        let v: Vec<f64> =
                            value.split_whitespace().map(|s| parse_f64(s, "piece")).collect::<Result<_>>()?;
                        if v.is_empty() || !v.len().is_multiple_of(2) {
                            return Err(at("piece needs an even, nonzero number of values"));
                        }
                        b.pieces.push(v.chunks(2).map(|c| C64::new(c[0], c[1])).collect());
                    }
                    _ => return Err(at("unknown key")),
                }
            }
        }
    }
    let n = n.ok_or_else(|| Error::Input("missing n".into()))?;
    if n < 2 {
        return Err(Error::Input(format!("order must be at least 2, got {n}")));
    }
    if let Some((&nu, _)) = blocks.iter().find(|(&nu, _)| nu > n - 2) {
        return Err(Error::Input(format!("tau{nu} is not a coefficient of an order-{n} expression")));
    }
    let mut tau0_block = blocks.remove(&0).unwrap_or_default();
    let anti = tau0_block.antiderivative.take().unwrap_or(true);
    let tau0 = if tau0_block.breaks.is_none() { Function1D::zero() } else { tau0_block.into_function("tau0")? };
    let mut higher = Vec::new();
    for nu in 1..=n - 2 {
        higher.push(match blocks.remove(&nu) {
            Some(b) => b.into_function(&format!("tau{nu}"))?,
            None => Function1D::zero(),
        });
    }
    let built = if anti {
        CoefficientSet::new(n, tau0, higher)
    } else {
        if tau0.breaks().len() != 2 {
            return Err(Error::Input("a direct tau0 must be a single polynomial".into()));
        }
        CoefficientSet::with_direct_tau0(n, &tau0, higher)
    };
    built.map_err(|e| match e {
        Error::Representation(m) => Error::Input(m),
        other => other,
    })
}

pub fn load_coefficients(path: &Path) -> Result<CoefficientSet> {
    parse_coefficients(&read_text(path)?)
}

pub fn save_coefficients(path: &Path, c: &CoefficientSet) -> Result<()> {
    write_text(path, &format_coefficients(c))
}

pub fn format_spectral(d: &SpectralData) -> String {
    let mut out = format!("# n={} count={}\n", d.n, d.count());
    for e in &d.entries {
        let _ = writeln!(
            out,
            "{} {} {} {} {} {}",
            e.l,
            e.k,
            fmt_f64(e.lambda.re),
            fmt_f64(e.lambda.im),
            fmt_f64(e.beta.re),
            fmt_f64(e.beta.im)
        );
    }
    out
}

pub fn parse_spectral(text: &str) -> Result<SpectralData> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::Input("empty spectral data file".into()))?;
    let mut n = None;
    let mut count = None;
    for tok in header.trim_start_matches('#').split_whitespace() {
        match tok.split_once('=') {
            Some(("n", v)) => n = v.parse::<usize>().ok(),
            Some(("count", v)) => count = v.parse::<usize>().ok(),
            _ => return Err(Error::Input(format!("bad header token {tok:?}"))),
        }
    }
    let (n, count) = match (n, count) {
        (Some(n), Some(c)) if n >= 2 => (n, c),
        _ => return Err(Error::Input("header must read `# n=<n> count=<L>`".into())),
    };
    let mut entries = Vec::new();
    for (no, line) in lines {
        if line.trim_start().starts_with('#') {
            continue;
        }
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.len() != 6 {
            return Err(Error::Input(format!("line {}: expected 6 fields", no + 1)));
        }
        let l: usize = t[0].parse().map_err(|_| Error::Input(format!("line {}: bad index l", no + 1)))?;
        let k: usize = t[1].parse().map_err(|_| Error::Input(format!("line {}: bad index k", no + 1)))?;
        if l == 0 || k == 0 || k >= n {
            return Err(Error::Input(format!("line {}: index ({l}, {k}) out of range", no + 1)));
        }
        let v: Vec<f64> = t[2..].iter().map(|s| parse_f64(s, "spectral data")).collect::<Result<_>>()?;
        entries.push(SpectralEntry { l, k, lambda: C64::new(v[0], v[1]), beta: C64::new(v[2], v[3]) });
    }
    let data = SpectralData { n, entries, provenance: Provenance::Loaded };
    if data.count() != count || data.entries.len() != count * (n - 1) {
        return Err(Error::Input(format!(
            "header announces count={count} but the records do not form a complete table"
        )));
    }
    Ok(data)
}

pub fn load_spectral(path: &Path) -> Result<SpectralData> {
    parse_spectral(&read_text(path)?)
}

pub fn save_spectral(path: &Path, d: &SpectralData) -> Result<()> {
    write_text(path, &format_spectral(d))
}

/// Flat `key = value` file.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) =
            line.split_once('=').ok_or_else(|| Error::Input(format!("line {}: expected key = value", no + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

/// CSV with a header row; every cell already formatted.
pub fn csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format_round_trips() {
        for v in [std::f64::consts::PI, -1.0e-300, 123456.789, 0.1 + 0.2] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn coefficient_file_round_trip() {
        let step = Function1D::new(
            vec![0.0, 0.5, 1.0],
            vec![vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)], vec![C64::new(0.5, 0.0), C64::new(-1.0, 0.0)]],
        )
        .unwrap();
        let c = CoefficientSet::new(
            4,
            step,
            vec![Function1D::constant(C64::new(0.0, 0.3)), Function1D::real_polynomial(&[1.0, -4.0, 3.0])],
        )
        .unwrap();
        let text = format_coefficients(&c);
        let back = parse_coefficients(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(format_coefficients(&back), text);
    }

    #[test]
    fn direct_tau0_is_antidifferentiated() {
        let text = "n = 2\n[tau0]\nantiderivative = false\nbreakpoints = 0 1\npiece = 2 0\n";
        let c = parse_coefficients(text).unwrap();
        assert!((c.tau0_antiderivative().eval(0.5) - C64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn malformed_inputs_are_input_errors() {
        for bad in [
            "",
            "n = 1\n",
            "n = 3\n[tau2]\nbreakpoints = 0 1\npiece = 1 0\n",
            "n = 2\n[tau0]\nbreakpoints = 0 1\npiece = 1\n",
            "n = 2\n[tau0]\nbreakpoints = 0 0.5\npiece = 1 0\n",
            "n = 2\nfoo = 3\n",
        ] {
            let e = parse_coefficients(bad).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{bad:?} gave {e}");
        }
    }

    #[test]
    fn spectral_file_round_trip() {
        let d = SpectralData {
            n: 3,
            entries: vec![
                SpectralEntry { l: 1, k: 1, lambda: C64::new(1.5, -2.0), beta: C64::new(0.1, 0.0) },
                SpectralEntry { l: 1, k: 2, lambda: C64::new(-1.5, -2.0), beta: C64::new(0.3, 1e-17) },
            ],
            provenance: Provenance::Computed,
        };
        let text = format_spectral(&d);
        let back = parse_spectral(&text).unwrap();
        assert_eq!(back.entries, d.entries);
        assert_eq!(format_spectral(&back), text);
        assert!(parse_spectral("# n=3 count=2\n1 1 0 0 0 0\n").is_err());
    }
}
