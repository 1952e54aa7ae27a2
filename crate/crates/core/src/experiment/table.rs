use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Per-replica rows: a header and one numeric record per replica, sorted
/// by the leading `replica_id` column. Flags are stored as 0 or 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Table {
        Table { columns: columns.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::InvalidParameter(format!("no column '{name}'")))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let i = self.index(name)?;
        Ok(self.rows.iter().map(|r| r[i]).collect())
    }

    /// Values of `name` on rows where the 0/1 column `flag` is set.
    pub fn column_where(&self, name: &str, flag: &str) -> Result<Vec<f64>> {
        let (i, j) = (self.index(name)?, self.index(flag)?);
        Ok(self.rows.iter().filter(|r| r[j] != 0.0).map(|r| r[i]).collect())
    }

    /// CSV with reals in shortest round-trip form, so reading back gives
    /// the same bits.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        out.write_record(&self.columns).map_err(csv_err)?;
        for r in &self.rows {
            out.write_record(r.iter().map(|v| fmt_real(*v))).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Table> {
        let mut rd = csv::Reader::from_reader(r);
        let columns = rd.headers().map_err(csv_err)?.iter().map(String::from).collect::<Vec<_>>();
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(csv_err)?;
            let row = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|_| Error::Parse { pos: rows.len() + 1, msg: format!("bad number '{s}'") }))
                .collect::<Result<Vec<_>>>()?;
            if row.len() != columns.len() {
                return Err(Error::Parse { pos: rows.len() + 1, msg: "wrong field count".into() });
            }
            rows.push(row);
        }
        Ok(Table { columns, rows })
    }
}

fn fmt_real(v: f64) -> String {
    format!("{v:?}")
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse { pos: 0, msg: e.to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let mut t = Table::new(&["replica_id", "a", "b"]);
        t.rows.push(vec![0.0, 0.1 + 0.2, -1e-300]);
        t.rows.push(vec![1.0, f64::MAX, 3.0]);
        t.rows.push(vec![2.0, -0.0, 1.0 / 3.0]);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = Table::read_csv(&buf[..]).unwrap();
        assert_eq!(back.columns, t.columns);
        for (x, y) in back.rows.iter().flatten().zip(t.rows.iter().flatten()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert!(String::from_utf8(buf).unwrap().ends_with('\n'));
    }
}
