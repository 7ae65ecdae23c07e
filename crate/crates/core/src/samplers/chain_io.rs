use std::io::{Read, Write};

use super::{ChainOutput, IterationRecord};
use crate::error::{Error, Result};

/// Streams chain rows to CSV as the sampler produces them.
///
/// Rows are assembled in full before being handed to the writer, so a
/// buffered file never ends inside a row unless the process dies during a
/// flush. [`read_chain_csv`] drops such a trailing fragment.
pub struct ChainWriter<W: Write> {
    out: W,
    flush_every: usize,
    rows: usize,
    line: String,
}

impl<W: Write> ChainWriter<W> {
    /// Writes the header `iteration,<names...>,loglik`.
    pub fn new(mut out: W, names: &[String], flush_every: usize) -> Result<Self> {
        let mut header = String::from("iteration");
        for n in names {
            header.push(',');
            header.push_str(n);
        }
        header.push_str(",loglik\n");
        out.write_all(header.as_bytes())?;
        out.flush()?;
        Ok(Self { out, flush_every: flush_every.max(1), rows: 0, line: String::new() })
    }

    pub fn write(&mut self, rec: &IterationRecord) -> Result<()> {
        use std::fmt::Write as _;
        self.line.clear();
        let _ = write!(self.line, "{}", rec.iteration);
        for v in rec.draw {
            let _ = write!(self.line, ",{v}");
        }
        let _ = writeln!(self.line, ",{}", rec.loglik);
        self.out.write_all(self.line.as_bytes())?;
        self.rows += 1;
        if self.rows.is_multiple_of(self.flush_every) {
            self.out.flush()?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Per-iteration acceptance indicators: one column per unit block and per
/// common block.
pub struct AcceptanceWriter<W: Write> {
    out: W,
    flush_every: usize,
    rows: usize,
    header_written: bool,
}

impl<W: Write> AcceptanceWriter<W> {
    pub fn new(out: W, flush_every: usize) -> Self {
        Self { out, flush_every: flush_every.max(1), rows: 0, header_written: false }
    }

    pub fn write(&mut self, rec: &IterationRecord) -> Result<()> {
        if !self.header_written {
            let mut header = String::from("iteration");
            for i in 1..=rec.unit_accepted.len() {
                header.push_str(&format!(",unit_{i}"));
            }
            for b in 1..=rec.common_accepted.len() {
                header.push_str(&format!(",common_{b}"));
            }
            header.push('\n');
            self.out.write_all(header.as_bytes())?;
            self.header_written = true;
        }
        let mut line = rec.iteration.to_string();
        for &a in rec.unit_accepted.iter().chain(rec.common_accepted) {
            line.push_str(if a { ",1" } else { ",0" });
        }
        line.push('\n');
        self.out.write_all(line.as_bytes())?;
        self.rows += 1;
        if self.rows.is_multiple_of(self.flush_every) {
            self.out.flush()?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// A chain read back from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSamples {
    pub names: Vec<String>,
    pub iterations: Vec<usize>,
    pub draws: Vec<Vec<f64>>,
    pub loglik: Vec<f64>,
}

impl ChainSamples {
    /// Draws of `name` after discarding the first `burn_in` rows.
    pub fn column(&self, name: &str, burn_in: usize) -> Option<Vec<f64>> {
        let k = self.names.iter().position(|n| n == name)?;
        Some(self.draws.iter().skip(burn_in).map(|r| r[k]).collect())
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Column-wise means after burn-in.
    pub fn posterior_mean(&self, burn_in: usize) -> Result<Vec<f64>> {
        let rows = &self.draws[burn_in.min(self.draws.len())..];
        if rows.is_empty() {
            return Err(Error::InvalidConfig("no draws left after burn-in".into()));
        }
        let mut m = vec![0.0; self.names.len()];
        for r in rows {
            m.iter_mut().zip(r).for_each(|(a, b)| *a += b);
        }
        m.iter_mut().for_each(|a| *a /= rows.len() as f64);
        Ok(m)
    }
}

impl From<&ChainOutput> for ChainSamples {
    fn from(c: &ChainOutput) -> Self {
        Self {
            names: c.names.clone(),
            iterations: (1..=c.draws.len()).collect(),
            draws: c.draws.clone(),
            loglik: c.loglik.clone(),
        }
    }
}

/// Reads a chain written by [`ChainWriter`]. Row numbers in errors count
/// the header as row 1.
pub fn read_chain_csv<R: Read>(mut reader: R) -> Result<ChainSamples> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    // An interrupted run can leave a partial final row.
    match text.rfind('\n') {
        Some(k) => text.truncate(k + 1),
        None => text.clear(),
    }
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| Error::Parse { row: 1, reason: e.to_string() })?.clone();
    let width = header.len();
    if width < 2 || &header[0] != "iteration" || &header[width - 1] != "loglik" {
        return Err(Error::Parse { row: 1, reason: "header must be iteration,<parameters...>,loglik".into() });
    }
    let names: Vec<String> = header.iter().skip(1).take(width - 2).map(str::to_string).collect();
    let mut out = ChainSamples { names, iterations: vec![], draws: vec![], loglik: vec![] };
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 2;
        let rec = rec.map_err(|e| Error::Parse { row, reason: e.to_string() })?;
        if rec.len() != width {
            return Err(Error::Parse { row, reason: format!("expected {width} fields, found {}", rec.len()) });
        }
        let iteration =
            rec[0].trim().parse().map_err(|_| Error::Parse { row, reason: format!("bad iteration {:?}", &rec[0]) })?;
        let mut values = Vec::with_capacity(width - 1);
        for field in rec.iter().skip(1) {
            let v: f64 =
                field.trim().parse().map_err(|_| Error::Parse { row, reason: format!("bad number {field:?}") })?;
            values.push(v);
        }
        out.loglik.push(values.pop().unwrap());
        out.iterations.push(iteration);
        out.draws.push(values);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record<'a>(it: usize, names: &'a [String], draw: &'a [f64], flags: &'a [bool]) -> IterationRecord<'a> {
        IterationRecord {
            iteration: it,
            names,
            draw,
            loglik: -1.5 * it as f64,
            unit_accepted: flags,
            common_accepted: &flags[..1],
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let names = vec!["phi_1_1".to_string(), "xi_1".to_string()];
        let mut w = ChainWriter::new(Vec::new(), &names, 2).unwrap();
        let rows = [[0.1, 1.0 / 3.0], [-2.5e-17, 7.0]];
        for (k, r) in rows.iter().enumerate() {
            w.write(&record(k + 1, &names, r, &[true, false])).unwrap();
        }
        let bytes = w.finish().unwrap();
        let back = read_chain_csv(bytes.as_slice()).unwrap();
        assert_eq!(back.names, names);
        assert_eq!(back.draws, rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>());
        assert_eq!(back.loglik, vec![-1.5, -3.0]);
        assert_eq!(back.column("xi_1", 1).unwrap(), vec![7.0]);
    }

    #[test]
    fn truncated_tail_is_dropped() {
        let text = "iteration,a,loglik\n1,0.5,-1\n2,0.7,-1\n3,0.";
        let c = read_chain_csv(text.as_bytes()).unwrap();
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn malformed_row_reports_row_number() {
        let text = "iteration,a,loglik\n1,0.5,-1\n2,x,-1\n";
        match read_chain_csv(text.as_bytes()) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 3),
            other => panic!("unexpected {other:?}"),
        }
        let short = "iteration,a,loglik\n1,0.5\n";
        assert!(matches!(read_chain_csv(short.as_bytes()), Err(Error::Parse { row: 2, .. })));
        assert!(matches!(read_chain_csv("a,b\n".as_bytes()), Err(Error::Parse { row: 1, .. })));
    }

    #[test]
    fn acceptance_rows() {
        let names = vec!["a".to_string()];
        let mut w = AcceptanceWriter::new(Vec::new(), 10);
        w.write(&record(1, &names, &[0.0], &[true, false])).unwrap();
        let s = String::from_utf8(w.finish().unwrap()).unwrap();
        assert_eq!(s, "iteration,unit_1,unit_2,common_1\n1,1,0,1\n");
    }
}
