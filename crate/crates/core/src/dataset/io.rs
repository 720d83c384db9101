//! Delimited text files for samples and detected candidates.
//!
//! Sample files hold one row per candidate with the columns `sample_id,
//! sequence_id, K_t, k, range_m, angle_deg, vel_mps, power, b_star, label_k,
//! n_points`; the per-sample fields repeat on every row of a sample.
//! Candidate files hold `sample_id, k, range_m, angle_deg, vel_mps, power,
//! n_points`. Floats are written in shortest round-trip form.

use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::detect::Candidate;
use crate::identify::Sample;
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SampleRow {
    sample_id: u64,
    sequence_id: u32,
    #[serde(rename = "K_t")]
    k_t: usize,
    k: usize,
    range_m: f64,
    angle_deg: f64,
    vel_mps: f64,
    power: f64,
    b_star: usize,
    label_k: usize,
    n_points: usize,
}

const SAMPLE_HEADER: [&str; 11] = [
    "sample_id", "sequence_id", "K_t", "k", "range_m", "angle_deg", "vel_mps", "power", "b_star", "label_k", "n_points",
];

/// One detected candidate of a processed frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateRow {
    pub sample_id: u64,
    pub k: usize,
    pub range_m: f64,
    pub angle_deg: f64,
    pub vel_mps: f64,
    pub power: f64,
    pub n_points: usize,
}

const CANDIDATE_HEADER: [&str; 7] = ["sample_id", "k", "range_m", "angle_deg", "vel_mps", "power", "n_points"];

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::parse(line, format!("{kind:?}")),
    }
}

fn write_rows<W: Write, T: Serialize>(w: W, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r).map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads every row after checking the header; yields each with its line number.
fn read_rows<R: Read, T: for<'de> Deserialize<'de>>(r: R, header: &[&str]) -> Result<Vec<(usize, T)>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let got = rdr.headers().map_err(csv_error)?.clone();
    if got.is_empty() || (got.len() == 1 && got[0].is_empty()) {
        return Err(Error::parse(1, "missing header"));
    }
    if got.iter().ne(header.iter().copied()) {
        return Err(Error::parse(1, format!("expected header '{}'", header.join(","))));
    }
    let mut rows = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                let line = record.position().map_or(0, |p| p.line() as usize);
                let row: T = record
                    .deserialize(Some(&got))
                    .map_err(|e| Error::parse(line, format!("{:?}", e.into_kind())))?;
                rows.push((line, row));
            }
            Err(e) => return Err(csv_error(e)),
        }
    }
    Ok(rows)
}

pub fn write_samples<W: Write>(samples: &[Sample], w: W) -> Result<()> {
    let rows = samples.iter().flat_map(|s| {
        s.candidates.iter().enumerate().map(move |(k, c)| SampleRow {
            sample_id: s.sample_id,
            sequence_id: s.sequence_id,
            k_t: s.candidates.len(),
            k,
            range_m: c.range_m,
            angle_deg: c.angle_deg,
            vel_mps: c.velocity_mps,
            power: c.power,
            b_star: s.beam,
            label_k: s.label,
            n_points: c.n_points,
        })
    });
    write_rows(w, rows)
}

pub fn read_samples<R: Read>(r: R) -> Result<Vec<Sample>> {
    let rows: Vec<(usize, SampleRow)> = read_rows(r, &SAMPLE_HEADER)?;
    let mut samples: Vec<Sample> = Vec::new();
    let mut expected_k = 0usize;
    let mut expected_kt = 0usize;
    for (line, row) in rows {
        let cand = Candidate {
            range_m: row.range_m,
            angle_deg: row.angle_deg,
            velocity_mps: row.vel_mps,
            n_points: row.n_points,
            power: row.power,
        };
        if expected_k == expected_kt {
            if row.k != 0 {
                return Err(Error::parse(line, format!("sample {} must start at k = 0", row.sample_id)));
            }
            if row.k_t == 0 || row.label_k >= row.k_t {
                return Err(Error::parse(line, format!("sample {}: bad K_t or label_k", row.sample_id)));
            }
            expected_kt = row.k_t;
            expected_k = 1;
            samples.push(Sample {
                sample_id: row.sample_id,
                sequence_id: row.sequence_id,
                candidates: vec![cand],
                beam: row.b_star,
                label: row.label_k,
            });
            continue;
        }
        let s = samples.last_mut().unwrap();
        if row.sample_id != s.sample_id
            || row.k != expected_k
            || row.k_t != expected_kt
            || row.sequence_id != s.sequence_id
            || row.b_star != s.beam
            || row.label_k != s.label
        {
            return Err(Error::parse(
                line,
                format!("row does not continue sample {} (expected k = {expected_k})", s.sample_id),
            ));
        }
        s.candidates.push(cand);
        expected_k += 1;
    }
    if expected_k != expected_kt {
        return Err(Error::parse(0, "file ends in the middle of a sample"));
    }
    Ok(samples)
}

pub fn save_samples(samples: &[Sample], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_samples(samples, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_samples(path: &Path) -> Result<Vec<Sample>> {
    read_samples(File::open(path)?)
}

pub fn write_candidates<W: Write>(rows: &[CandidateRow], w: W) -> Result<()> {
    write_rows(w, rows)
}

pub fn read_candidates<R: Read>(r: R) -> Result<Vec<CandidateRow>> {
    Ok(read_rows(r, &CANDIDATE_HEADER)?.into_iter().map(|(_, row)| row).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_dataset, Mode, ScenarioConfig};
    use proptest::prelude::*;

    const FIXTURE: &str = "\
sample_id,sequence_id,K_t,k,range_m,angle_deg,vel_mps,power,b_star,label_k,n_points
0,3,2,0,21.5,-12.25,4.5,0.8,20,1,1
0,3,2,1,33,-10,-6,0.2,20,1,3
1,3,1,0,22,-8.5,4.4,0.7,22,0,1
";

    #[test]
    fn fixture_parses_to_expected_records() {
        let s = read_samples(FIXTURE.as_bytes()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].sample_id, 0);
        assert_eq!(s[0].sequence_id, 3);
        assert_eq!(s[0].beam, 20);
        assert_eq!(s[0].label, 1);
        assert_eq!(
            s[0].candidates[1],
            Candidate {
                range_m: 33.0,
                angle_deg: -10.0,
                velocity_mps: -6.0,
                n_points: 3,
                power: 0.2
            }
        );
        assert_eq!(s[1].candidates.len(), 1);
        assert_eq!(s[1].candidates[0].angle_deg, -8.5);
    }

    #[test]
    fn empty_file_is_a_parse_error() {
        assert!(matches!(read_samples(&b""[..]), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn malformed_rows_name_their_line() {
        let bad = FIXTURE.replace("0,3,2,1,33,", "0,3,2,1,abc,");
        match read_samples(bad.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let skipped = FIXTURE.replace("0,3,2,1,33,", "0,3,2,2,33,");
        assert!(matches!(read_samples(skipped.as_bytes()), Err(Error::Parse { line: 3, .. })));
        let truncated: String = FIXTURE.lines().take(2).map(|l| format!("{l}\n")).collect();
        assert!(read_samples(truncated.as_bytes()).is_err());
        let short = FIXTURE.replace("22,0,1\n", "22,0\n");
        assert!(matches!(read_samples(short.as_bytes()), Err(Error::Parse { line: 4, .. })));
    }

    #[test]
    fn default_dataset_round_trip_is_byte_stable() {
        let data = generate_dataset(&ScenarioConfig::default(), Mode::Fast).unwrap();
        let mut a = Vec::new();
        write_samples(&data, &mut a).unwrap();
        let back = read_samples(&a[..]).unwrap();
        assert_eq!(back, data);
        let mut b = Vec::new();
        write_samples(&back, &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn candidate_rows_round_trip() {
        let rows = vec![
            CandidateRow { sample_id: 4, k: 0, range_m: 12.5, angle_deg: -3.25, vel_mps: 1.0, power: 1e5, n_points: 7 },
            CandidateRow { sample_id: 4, k: 1, range_m: 40.0, angle_deg: 30.0, vel_mps: -2.0, power: 3.0, n_points: 2 },
        ];
        let mut buf = Vec::new();
        write_candidates(&rows, &mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("sample_id,k,range_m"));
        assert_eq!(read_candidates(&buf[..]).unwrap(), rows);
    }

    proptest! {
        #[test]
        fn arbitrary_floats_round_trip(vals in proptest::collection::vec((-1e6f64..1e6, -90.0f64..90.0, -50.0f64..50.0), 1..8), label in 0usize..8) {
            let cands: Vec<Candidate> = vals.iter().map(|&(r, a, v)| Candidate { range_m: r.abs(), angle_deg: a, velocity_mps: v, n_points: 1, power: r * r }).collect();
            let s = Sample { sample_id: 9, sequence_id: 1, label: label % cands.len(), candidates: cands, beam: 5 };
            let mut buf = Vec::new();
            write_samples(std::slice::from_ref(&s), &mut buf).unwrap();
            prop_assert_eq!(read_samples(&buf[..]).unwrap(), vec![s]);
        }
    }
}
