//! CSV persistence plus the JSON manifest that sits next to each dataset.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{count_digits, CountVector, DigitSample, DigitString, Encoding, SplitRatios};
use crate::error::{Error, Result};
use crate::OUTPUTS;

fn count_header(j: usize) -> String {
    format!("Count of digit {j}")
}

fn header(encoding: Encoding, digits: usize) -> Vec<String> {
    let mut cols: Vec<String> = (0..OUTPUTS).map(count_header).collect();
    match encoding {
        Encoding::Original => cols.push("Number".into()),
        Encoding::Modified => cols.extend((1..=digits).map(|i| format!("Digit {i}"))),
    }
    cols
}

/// Writes samples as CSV. Numbers are zero-padded to the digit length.
pub fn write_dataset(samples: &[DigitSample], encoding: Encoding, path: &Path) -> Result<()> {
    let digits = super::uniform_digits(samples)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = csv::Writer::from_writer(BufWriter::new(file));
    let csv_err = |e: csv::Error| Error::io(path, e.into());

    out.write_record(header(encoding, digits)).map_err(csv_err)?;
    let mut record = Vec::with_capacity(OUTPUTS + digits);
    for s in samples {
        record.clear();
        record.extend(s.label.0.iter().map(|c| c.to_string()));
        match encoding {
            Encoding::Original => record.push(s.number.to_string()),
            Encoding::Modified => record.extend(s.number.digits().iter().map(|d| d.to_string())),
        }
        out.write_record(&record).map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Samples loaded from disk together with the encoding found in the header.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetFile {
    pub encoding: Encoding,
    pub digits: usize,
    pub samples: Vec<DigitSample>,
}

/// Reads a dataset CSV, checking every row's counts against its digits.
pub fn read_dataset(path: &Path) -> Result<DatasetFile> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(BufReader::new(file));
    let malformed = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };

    let head: Vec<String> = reader
        .headers()
        .map_err(|e| malformed(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if head.len() < OUTPUTS + 1 || (0..OUTPUTS).any(|j| head[j] != count_header(j)) {
        return Err(malformed(format!("unexpected header {head:?}")));
    }
    let (encoding, digits) = if head.len() == OUTPUTS + 1 && head[OUTPUTS] == "Number" {
        (Encoding::Original, None)
    } else {
        let digits = head.len() - OUTPUTS;
        if head != header(Encoding::Modified, digits) {
            return Err(malformed(format!("unexpected header {head:?}")));
        }
        (Encoding::Modified, Some(digits))
    };

    let mut samples = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| malformed(format!("data row {row}: {e}")))?;
        if record.len() != head.len() {
            return Err(malformed(format!("data row {row} has {} fields", record.len())));
        }
        let mut found = [0u8; OUTPUTS];
        for (j, slot) in found.iter_mut().enumerate() {
            *slot = record[j]
                .trim()
                .parse()
                .map_err(|_| malformed(format!("data row {row}: bad count {:?}", &record[j])))?;
        }
        let number = match encoding {
            Encoding::Original => DigitString::parse(&record[OUTPUTS]),
            Encoding::Modified => {
                let text: String = record.iter().skip(OUTPUTS).map(str::trim).collect();
                DigitString::parse(&text)
            }
        }
        .map_err(|e| malformed(format!("data row {row}: {e}")))?;
        if let Some(d) = digits {
            if number.len() != d {
                return Err(malformed(format!("data row {row}: expected {d} digits")));
            }
        }
        let expected = count_digits(&number);
        if expected.0 != found {
            return Err(Error::Integrity {
                row,
                number: number.to_string(),
                expected: expected.0,
                found,
            });
        }
        samples.push(DigitSample {
            number,
            label: CountVector(found),
        });
    }
    let digits = super::uniform_digits(&samples)
        .map_err(|e| malformed(e.to_string()))?;
    Ok(DatasetFile {
        encoding,
        digits,
        samples,
    })
}

/// Provenance written next to a dataset CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub digits: usize,
    pub count: usize,
    pub seed: u64,
    pub leading_zeros: bool,
    pub encoding: Encoding,
    pub split_ratios: SplitRatios,
    pub split_seed: u64,
}

/// `data/six.csv` -> `data/six.manifest.json`.
pub fn manifest_path(dataset: &Path) -> PathBuf {
    dataset.with_extension("manifest.json")
}

impl DatasetManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_dataset, DatasetSpec};

    #[test]
    fn round_trip_both_encodings() {
        let dir = tempfile::tempdir().unwrap();
        let samples = generate_dataset(&DatasetSpec::new(6, 2000, 11)).unwrap();
        for enc in [Encoding::Original, Encoding::Modified] {
            let path = dir.path().join("d.csv");
            write_dataset(&samples, enc, &path).unwrap();
            let back = read_dataset(&path).unwrap();
            assert_eq!(back.encoding, enc);
            assert_eq!(back.digits, 6);
            assert_eq!(back.samples, samples);
        }
    }

    #[test]
    fn modified_ten_digit_header_width() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ten.csv");
        let samples = generate_dataset(&DatasetSpec::new(10, 10, 1)).unwrap();
        write_dataset(&samples, Encoding::Modified, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let first = text.lines().next().unwrap();
        assert_eq!(first.split(',').count(), 20);
        assert!(first.starts_with("Count of digit 0,"));
        assert!(first.ends_with("Digit 9,Digit 10"));
    }

    #[test]
    fn leading_zero_numbers_are_padded() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("z.csv");
        let samples = vec![DigitSample::new(DigitString::parse("000042").unwrap())];
        write_dataset(&samples, Encoding::Original, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text.lines().nth(1).unwrap(),
            "4,0,1,0,1,0,0,0,0,0,000042"
        );
        assert_eq!(read_dataset(&path).unwrap().samples, samples);
    }

    #[test]
    fn tampered_count_names_the_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let samples = generate_dataset(&DatasetSpec::new(6, 5, 2)).unwrap();
        write_dataset(&samples, Encoding::Original, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
        // Bump the first count of data row 3 without touching the number.
        let mut fields: Vec<String> = lines[3].split(',').map(str::to_string).collect();
        fields[0] = (fields[0].parse::<u8>().unwrap() + 1).to_string();
        lines[3] = fields.join(",");
        std::fs::write(&path, lines.join("\n") + "\n").unwrap();

        match read_dataset(&path) {
            Err(Error::Integrity { row, .. }) => assert_eq!(row, 3),
            other => panic!("expected integrity error, got {other:?}"),
        }
    }

    #[test]
    fn bad_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        std::fs::write(&path, "a,b,c\n1,2,3\n").unwrap();
        assert!(matches!(read_dataset(&path), Err(Error::Format { .. })));
        assert!(matches!(
            read_dataset(&dir.path().join("missing.csv")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("six.csv");
        let m = DatasetManifest {
            digits: 6,
            count: 150_000,
            seed: 7,
            leading_zeros: true,
            encoding: Encoding::Modified,
            split_ratios: SplitRatios::PAPER,
            split_seed: 8,
        };
        let mpath = manifest_path(&csv);
        assert_eq!(mpath.file_name().unwrap(), "six.manifest.json");
        m.write(&mpath).unwrap();
        assert_eq!(DatasetManifest::read(&mpath).unwrap(), m);
    }
}
