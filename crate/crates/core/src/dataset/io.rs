use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Dataset, DatasetError, NormBounds, RawSample, Regime, SampleMeta, ScenarioClass, CLASS_COUNT};
use crate::fleet::WINDOW_TICKS;

pub const DATASET_MAGIC: &[u8; 5] = b"OGDS1";
pub const DATASET_VERSION: u32 = 1;

// Record: id u64, station u32, bus u32, t_end f64, regime u8, label u8,
// class u8, then events and frequencies.
const RECORD_BYTES: usize = 8 + 4 + 4 + 8 + 3 + WINDOW_TICKS + 8 * WINDOW_TICKS;

pub fn write_dataset<W: Write>(mut w: W, ds: &Dataset) -> Result<(), DatasetError> {
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&DATASET_VERSION.to_le_bytes())?;
    w.write_all(&(WINDOW_TICKS as u32).to_le_bytes())?;
    w.write_all(&(ds.len() as u64).to_le_bytes())?;
    w.write_all(&ds.bounds.min_hz.to_le_bytes())?;
    w.write_all(&ds.bounds.max_hz.to_le_bytes())?;
    w.write_all(&[ds.regime.code()])?;
    for c in ds.class_counts() {
        w.write_all(&c.to_le_bytes())?;
    }
    let mut rec = Vec::with_capacity(RECORD_BYTES);
    for s in &ds.samples {
        if s.event_codes.len() != WINDOW_TICKS {
            return Err(DatasetError::WrongLength(s.event_codes.len()));
        }
        if s.freq_hz.len() != WINDOW_TICKS {
            return Err(DatasetError::WrongLength(s.freq_hz.len()));
        }
        rec.clear();
        rec.extend_from_slice(&s.meta.scenario_id.to_le_bytes());
        rec.extend_from_slice(&s.meta.station_id.to_le_bytes());
        rec.extend_from_slice(&s.meta.bus_id.to_le_bytes());
        rec.extend_from_slice(&s.meta.t_end.to_le_bytes());
        rec.extend_from_slice(&[s.meta.regime.code(), s.label, s.class as u8]);
        rec.extend_from_slice(&s.event_codes);
        for f in &s.freq_hz {
            rec.extend_from_slice(&f.to_le_bytes());
        }
        w.write_all(&rec)?;
    }
    w.flush()?;
    Ok(())
}

struct Cursor<'a>(&'a [u8]);

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let (a, b) = self.0.split_at(N);
        self.0 = b;
        a.try_into().expect("split_at gives N bytes")
    }
    fn u8(&mut self) -> u8 {
        self.take::<1>()[0]
    }
    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }
    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take())
    }
    fn f64(&mut self) -> f64 {
        f64::from_le_bytes(self.take())
    }
}

fn read_exact_or_corrupt<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<(), DatasetError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => DatasetError::Corrupt(format!("truncated {what}")),
        _ => DatasetError::Io(e),
    })
}

pub fn read_dataset<R: Read>(mut r: R) -> Result<Dataset, DatasetError> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic).map_err(|_| DatasetError::BadMagic)?;
    if &magic != DATASET_MAGIC {
        return Err(DatasetError::BadMagic);
    }
    let mut head = [0u8; 4 + 4 + 8 + 8 + 8 + 1 + 4 * CLASS_COUNT];
    read_exact_or_corrupt(&mut r, &mut head, "header")?;
    let mut c = Cursor(&head);
    let version = c.u32();
    if version != DATASET_VERSION {
        return Err(DatasetError::BadVersion(version));
    }
    let window = c.u32();
    if window as usize != WINDOW_TICKS {
        return Err(DatasetError::Corrupt(format!("window length {window}, expected {WINDOW_TICKS}")));
    }
    let n = c.u64();
    let bounds = NormBounds::new(c.f64(), c.f64())?;
    let regime = Regime::from_code(c.u8()).ok_or_else(|| DatasetError::Corrupt("unknown regime".into()))?;
    let mut counts = [0u32; CLASS_COUNT];
    for k in &mut counts {
        *k = c.u32();
    }
    if counts.iter().map(|k| *k as u64).sum::<u64>() != n {
        return Err(DatasetError::Corrupt("class counts do not add up to the record count".into()));
    }

    let mut samples = Vec::with_capacity(n.min(1 << 20) as usize);
    let mut rec = vec![0u8; RECORD_BYTES];
    for i in 0..n {
        read_exact_or_corrupt(&mut r, &mut rec, &format!("record {i}"))?;
        let mut c = Cursor(&rec);
        let scenario_id = c.u64();
        let station_id = c.u32();
        let bus_id = c.u32();
        let t_end = c.f64();
        let rg = Regime::from_code(c.u8()).ok_or_else(|| DatasetError::Corrupt(format!("record {i}: regime")))?;
        let label = c.u8();
        let class =
            ScenarioClass::from_code(c.u8()).ok_or_else(|| DatasetError::Corrupt(format!("record {i}: class")))?;
        if label > 1 {
            return Err(DatasetError::Corrupt(format!("record {i}: label {label}")));
        }
        let event_codes = c.0[..WINDOW_TICKS].to_vec();
        if event_codes.iter().any(|e| *e > 2) {
            return Err(DatasetError::Corrupt(format!("record {i}: event code out of range")));
        }
        c.0 = &c.0[WINDOW_TICKS..];
        let freq_hz: Vec<f64> = (0..WINDOW_TICKS).map(|_| c.f64()).collect();
        if freq_hz.iter().any(|f| !f.is_finite()) {
            return Err(DatasetError::Corrupt(format!("record {i}: non-finite frequency")));
        }
        samples.push(RawSample {
            meta: SampleMeta { scenario_id, station_id, bus_id, t_end, regime: rg },
            label,
            class,
            event_codes,
            freq_hz,
        });
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(DatasetError::Corrupt("trailing bytes after last record".into()));
    }
    let ds = Dataset { samples, bounds, regime };
    if ds.class_counts() != counts {
        return Err(DatasetError::Corrupt("header class counts disagree with records".into()));
    }
    Ok(ds)
}

pub fn write_dataset_file(path: &Path, ds: &Dataset) -> Result<(), DatasetError> {
    write_dataset(BufWriter::new(File::create(path)?), ds)
}

pub fn read_dataset_file(path: &Path) -> Result<Dataset, DatasetError> {
    read_dataset(BufReader::new(File::open(path)?))
}

/// Long-format CSV, one row per tick.
pub fn write_dataset_csv<W: Write>(mut w: W, ds: &Dataset) -> Result<(), DatasetError> {
    writeln!(w, "scenario_id,station_id,bus_id,t_end,label,class,tick,event,freq_hz,freq_norm")?;
    for i in 0..ds.len() {
        let s = &ds.samples[i];
        let win = ds.window(i);
        for k in 0..WINDOW_TICKS {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                s.meta.scenario_id,
                s.meta.station_id,
                s.meta.bus_id,
                s.meta.t_end,
                s.label,
                s.class.name(),
                k,
                s.event_codes[k],
                s.freq_hz[k],
                win.frequency[k]
            )?;
        }
    }
    w.flush()?;
    Ok(())
}
