//! Datasets and their CSV representation.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::models::ParameterState;

/// Observations of one experimental unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Unit {
    pub id: usize,
    pub times: Vec<f64>,
    values: Vec<f64>,
    obs_dim: usize,
}

impl Unit {
    /// `values` holds `obs_dim` entries per observation time.
    pub fn new(id: usize, times: Vec<f64>, values: Vec<f64>, obs_dim: usize) -> Result<Self> {
        if times.is_empty() || obs_dim == 0 || values.len() != times.len() * obs_dim {
            return Err(Error::InvalidConfig(format!("unit {id}: shape mismatch")));
        }
        if times.iter().any(|t| !t.is_finite()) || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("unit {id}: non-finite time or observation")));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain(format!("unit {id}: times must be strictly increasing")));
        }
        Ok(Self { id, times, values, obs_dim })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn y(&self, t: usize) -> &[f64] {
        &self.values[t * self.obs_dim..(t + 1) * self.obs_dim]
    }

    /// Copy restricted to the first `n` observations.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        let n = n.min(self.len());
        Unit::new(self.id, self.times[..n].to_vec(), self.values[..n * self.obs_dim].to_vec(), self.obs_dim)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub units: Vec<Unit>,
}

impl Dataset {
    pub fn new(units: Vec<Unit>) -> Result<Self> {
        if units.is_empty() {
            return Err(Error::InvalidConfig("dataset has no units".into()));
        }
        let d = units[0].obs_dim;
        if units.iter().any(|u| u.obs_dim != d) {
            return Err(Error::InvalidConfig("units disagree on observation dimension".into()));
        }
        Ok(Self { units })
    }

    pub fn obs_dim(&self) -> usize {
        self.units[0].obs_dim
    }

    pub fn n_rows(&self) -> usize {
        self.units.iter().map(Unit::len).sum()
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 3 || &headers[0] != "unit_id" || &headers[1] != "time" {
            return Err(Error::Parse { row: 1, reason: "expected header unit_id,time,y1[,y2...]".into() });
        }
        let d = headers.len() - 2;
        let mut rows: BTreeMap<usize, Vec<(f64, Vec<f64>)>> = BTreeMap::new();
        for (k, rec) in rdr.records().enumerate() {
            let row = k + 2;
            let rec = rec.map_err(|e| Error::Parse { row, reason: e.to_string() })?;
            if rec.len() != d + 2 {
                return Err(Error::Parse { row, reason: format!("expected {} fields, found {}", d + 2, rec.len()) });
            }
            let id: usize = rec[0]
                .trim()
                .parse()
                .map_err(|_| Error::Parse { row, reason: format!("bad unit_id {:?}", &rec[0]) })?;
            let num = |s: &str| -> Result<f64> {
                s.trim().parse::<f64>().map_err(|_| Error::Parse { row, reason: format!("bad number {s:?}") })
            };
            let t = num(&rec[1])?;
            let y = (2..d + 2).map(|c| num(&rec[c])).collect::<Result<Vec<_>>>()?;
            rows.entry(id).or_default().push((t, y));
        }
        let mut units = Vec::with_capacity(rows.len());
        for (id, mut obs) in rows {
            obs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let times = obs.iter().map(|o| o.0).collect();
            let values = obs.into_iter().flat_map(|o| o.1).collect();
            units.push(Unit::new(id, times, values, d)?);
        }
        Dataset::new(units)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["unit_id".to_string(), "time".to_string()];
        header.extend((1..=self.obs_dim()).map(|j| format!("y{j}")));
        w.write_record(&header)?;
        for u in &self.units {
            for t in 0..u.len() {
                let mut rec = vec![u.id.to_string(), u.times[t].to_string()];
                rec.extend(u.y(t).iter().map(|v| v.to_string()));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Column names of a parameter state, in chain order.
pub fn parameter_names(m: usize, q: usize, p: usize, n_xi: usize) -> Vec<String> {
    let mut names = Vec::with_capacity(m * q + p + n_xi + 2 * q);
    for i in 1..=m {
        names.extend((1..=q).map(|j| format!("phi_{i}_{j}")));
    }
    names.extend((1..=p).map(|k| format!("kappa_{k}")));
    names.extend((1..=n_xi).map(|k| format!("xi_{k}")));
    names.extend((1..=q).map(|j| format!("mu_{j}")));
    names.extend((1..=q).map(|j| format!("tau_{j}")));
    names
}

impl ParameterState {
    /// Values in the order of [`parameter_names`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.phi.iter().flatten().copied().collect();
        v.extend(&self.kappa);
        v.extend(&self.xi);
        v.extend(&self.mu);
        v.extend(&self.tau);
        v
    }

    pub fn names(&self) -> Vec<String> {
        parameter_names(self.phi.len(), self.mu.len(), self.kappa.len(), self.xi.len())
    }

    /// Writes the `parameter,name,value` sidecar.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["parameter", "name", "value"])?;
        for (name, value) in self.names().iter().zip(self.flatten()) {
            let group = name.split('_').next().unwrap_or_default();
            w.write_record([group, name, &value.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Rebuilds a state from `(name, value)` pairs named as in
    /// [`parameter_names`]. Unit rows must appear in order.
    pub fn from_named<'a>(pairs: impl IntoIterator<Item = (&'a str, f64)>) -> Result<Self> {
        let mut state = ParameterState { phi: vec![], kappa: vec![], xi: vec![], mu: vec![], tau: vec![] };
        for (k, (name, value)) in pairs.into_iter().enumerate() {
            state.push_named(name, value).map_err(|reason| Error::Parse { row: k + 2, reason })?;
        }
        Ok(state)
    }

    fn push_named(&mut self, name: &str, value: f64) -> std::result::Result<(), String> {
        let parts: Vec<&str> = name.split('_').collect();
        match parts.as_slice() {
            ["phi", i, _] => {
                let i: usize = i.parse().map_err(|_| "bad unit index".to_string())?;
                if i == 0 {
                    return Err("unit indices start at 1".into());
                }
                if self.phi.len() < i {
                    self.phi.resize(i, Vec::new());
                }
                self.phi[i - 1].push(value);
            }
            ["kappa", _] => self.kappa.push(value),
            ["xi", _] => self.xi.push(value),
            ["mu", _] => self.mu.push(value),
            ["tau", _] => self.tau.push(value),
            _ => return Err(format!("unknown parameter {name:?}")),
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut state = ParameterState::from_named([])?;
        for (k, rec) in rdr.records().enumerate() {
            let row = k + 2;
            let rec = rec.map_err(|e| Error::Parse { row, reason: e.to_string() })?;
            if rec.len() != 3 {
                return Err(Error::Parse { row, reason: "expected parameter,name,value".into() });
            }
            let value: f64 =
                rec[2].trim().parse().map_err(|_| Error::Parse { row, reason: format!("bad value {:?}", &rec[2]) })?;
            state.push_named(&rec[1], value).map_err(|reason| Error::Parse { row, reason })?;
        }
        Ok(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loader_sorts_rows() {
        let csv = "unit_id,time,y1\n2,1.0,5\n1,0.5,2\n2,0.0,4\n1,0.0,1\n";
        let d = Dataset::read_csv(csv.as_bytes()).unwrap();
        assert_eq!(d.units.len(), 2);
        assert_eq!(d.units[0].id, 1);
        assert_eq!(d.units[0].times, vec![0.0, 0.5]);
        assert_eq!(d.units[1].y(1), &[5.0]);
    }

    #[test]
    fn duplicate_times_rejected() {
        let csv = "unit_id,time,y1\n1,0.0,1\n1,0.0,2\n";
        assert!(Dataset::read_csv(csv.as_bytes()).is_err());
    }

    #[test]
    fn malformed_row_reports_line() {
        let csv = "unit_id,time,y1\n1,0.0,1\n1,abc,2\n";
        match Dataset::read_csv(csv.as_bytes()) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn round_trip() {
        let u = Unit::new(3, vec![0.0, 1.0], vec![1.5, -2.0, 0.25, 7.0], 2).unwrap();
        let d = Dataset::new(vec![u]).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        assert_eq!(Dataset::read_csv(buf.as_slice()).unwrap(), d);
    }

    #[test]
    fn truth_sidecar_round_trip() {
        let s = ParameterState {
            phi: vec![vec![0.1, 0.2], vec![0.3, 0.4]],
            kappa: vec![],
            xi: vec![0.3],
            mu: vec![1.0, 2.0],
            tau: vec![4.0, 5.0],
        };
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("parameter,name,value\nphi,phi_1_1,0.1\n"));
        assert_eq!(ParameterState::read_csv(buf.as_slice()).unwrap(), s);
        let names = s.names();
        let named = ParameterState::from_named(names.iter().map(|n| n.as_str()).zip(s.flatten())).unwrap();
        assert_eq!(named, s);
    }
}
