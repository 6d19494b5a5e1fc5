//! Reproducible NPZ containers: an uncompressed ZIP archive holding one
//! `<record>.npy` entry per array. Entries are stored (method 0) in sorted
//! record-name order with a fixed timestamp, so two writes of the same
//! record map are byte-identical.

use super::npy::{read_npy, write_npy, NdArray};
use super::DatasetError;
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

const LOCAL_HEADER_SIG: u32 = 0x0403_4B50;
const CENTRAL_DIR_SIG: u32 = 0x0201_4B50;
const EOCD_SIG: u32 = 0x0605_4B50;
// 1980-01-01 00:00:00 in DOS date/time encoding.
const DOS_DATE: u16 = 0x0021;
const DOS_TIME: u16 = 0x0000;

fn push_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

/// Serialize records into an uncompressed ZIP archive.
pub fn write_npz(records: &BTreeMap<String, NdArray>) -> Result<Vec<u8>, DatasetError> {
    let mut out = Vec::new();
    let mut central = Vec::new();
    let mut entries = 0u16;

    for (name, arr) in records {
        let file_name = format!("{name}.npy");
        let data = write_npy(arr);
        if data.len() > u32::MAX as usize || out.len() > u32::MAX as usize {
            return Err(DatasetError::Npz("archive exceeds 4 GiB".to_string()));
        }
        let crc = crc32fast::hash(&data);
        let offset = out.len() as u32;
        let size = data.len() as u32;

        push_u32(&mut out, LOCAL_HEADER_SIG);
        push_u16(&mut out, 20); // version needed
        push_u16(&mut out, 0); // flags
        push_u16(&mut out, 0); // method: stored
        push_u16(&mut out, DOS_TIME);
        push_u16(&mut out, DOS_DATE);
        push_u32(&mut out, crc);
        push_u32(&mut out, size);
        push_u32(&mut out, size);
        push_u16(&mut out, file_name.len() as u16);
        push_u16(&mut out, 0); // extra length
        out.extend_from_slice(file_name.as_bytes());
        out.extend_from_slice(&data);

        push_u32(&mut central, CENTRAL_DIR_SIG);
        push_u16(&mut central, 20); // version made by
        push_u16(&mut central, 20); // version needed
        push_u16(&mut central, 0);
        push_u16(&mut central, 0);
        push_u16(&mut central, DOS_TIME);
        push_u16(&mut central, DOS_DATE);
        push_u32(&mut central, crc);
        push_u32(&mut central, size);
        push_u32(&mut central, size);
        push_u16(&mut central, file_name.len() as u16);
        push_u16(&mut central, 0); // extra
        push_u16(&mut central, 0); // comment
        push_u16(&mut central, 0); // disk number
        push_u16(&mut central, 0); // internal attributes
        push_u32(&mut central, 0); // external attributes
        push_u32(&mut central, offset);
        central.extend_from_slice(file_name.as_bytes());

        entries = entries
            .checked_add(1)
            .ok_or_else(|| DatasetError::Npz("too many records".to_string()))?;
    }

    let central_offset = out.len() as u32;
    let central_size = central.len() as u32;
    out.extend_from_slice(&central);
    push_u32(&mut out, EOCD_SIG);
    push_u16(&mut out, 0);
    push_u16(&mut out, 0);
    push_u16(&mut out, entries);
    push_u16(&mut out, entries);
    push_u32(&mut out, central_size);
    push_u32(&mut out, central_offset);
    push_u16(&mut out, 0); // comment length
    Ok(out)
}

/// Parse an NPZ archive into its record map. Only stored (uncompressed)
/// entries are supported; entry names lose their `.npy` suffix.
pub fn read_npz(bytes: &[u8]) -> Result<BTreeMap<String, NdArray>, DatasetError> {
    let malformed = |msg: String| DatasetError::Npz(msg);
    let eocd = find_eocd(bytes).ok_or_else(|| malformed("missing end-of-archive record".into()))?;
    let entry_count = read_u16(bytes, eocd + 10)? as usize;
    let central_size = read_u32(bytes, eocd + 12)? as usize;
    let central_offset = read_u32(bytes, eocd + 16)? as usize;
    if central_offset + central_size > bytes.len() {
        return Err(malformed("central directory out of bounds".into()));
    }

    let mut records = BTreeMap::new();
    let mut pos = central_offset;
    for _ in 0..entry_count {
        if read_u32(bytes, pos)? != CENTRAL_DIR_SIG {
            return Err(malformed("bad central directory signature".into()));
        }
        let method = read_u16(bytes, pos + 10)?;
        let compressed = read_u32(bytes, pos + 20)? as usize;
        let crc = read_u32(bytes, pos + 16)?;
        let name_len = read_u16(bytes, pos + 28)? as usize;
        let extra_len = read_u16(bytes, pos + 30)? as usize;
        let comment_len = read_u16(bytes, pos + 32)? as usize;
        let local_offset = read_u32(bytes, pos + 42)? as usize;
        let name_bytes = bytes
            .get(pos + 46..pos + 46 + name_len)
            .ok_or_else(|| malformed("truncated entry name".into()))?;
        let name = std::str::from_utf8(name_bytes)
            .map_err(|_| malformed("entry name is not UTF-8".into()))?
            .to_string();
        if method != 0 {
            return Err(malformed(format!(
                "entry {name:?} uses compression method {method}; only stored entries are supported"
            )));
        }

        if read_u32(bytes, local_offset)? != LOCAL_HEADER_SIG {
            return Err(malformed(format!("bad local header for {name:?}")));
        }
        let local_name_len = read_u16(bytes, local_offset + 26)? as usize;
        let local_extra_len = read_u16(bytes, local_offset + 28)? as usize;
        let data_start = local_offset + 30 + local_name_len + local_extra_len;
        let data = bytes
            .get(data_start..data_start + compressed)
            .ok_or_else(|| malformed(format!("truncated data for {name:?}")))?;
        if crc32fast::hash(data) != crc {
            return Err(malformed(format!("CRC mismatch for {name:?}")));
        }

        let record_name = name.strip_suffix(".npy").unwrap_or(&name).to_string();
        let arr = read_npy(data)?;
        records.insert(record_name, arr);

        pos += 46 + name_len + extra_len + comment_len;
    }
    Ok(records)
}

pub fn write_npz_file(path: &Path, records: &BTreeMap<String, NdArray>) -> Result<(), DatasetError> {
    let bytes = write_npz(records)?;
    fs::write(path, bytes).map_err(DatasetError::Io)
}

pub fn read_npz_file(path: &Path) -> Result<BTreeMap<String, NdArray>, DatasetError> {
    if !path.exists() {
        return Err(DatasetError::MissingFile(path.to_path_buf()));
    }
    let bytes = fs::read(path).map_err(DatasetError::Io)?;
    read_npz(&bytes)
}

fn find_eocd(bytes: &[u8]) -> Option<usize> {
    // EOCD is 22 bytes plus an optional comment at the very end; scan back.
    if bytes.len() < 22 {
        return None;
    }
    let start = bytes.len().saturating_sub(22 + u16::MAX as usize);
    (start..=bytes.len() - 22)
        .rev()
        .find(|&i| read_u32(bytes, i).ok() == Some(EOCD_SIG))
}

fn read_u16(bytes: &[u8], pos: usize) -> Result<u16, DatasetError> {
    bytes
        .get(pos..pos + 2)
        .map(|b| u16::from_le_bytes([b[0], b[1]]))
        .ok_or_else(|| DatasetError::Npz("unexpected end of archive".to_string()))
}

fn read_u32(bytes: &[u8], pos: usize) -> Result<u32, DatasetError> {
    bytes
        .get(pos..pos + 4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| DatasetError::Npz("unexpected end of archive".to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_records() -> BTreeMap<String, NdArray> {
        let mut m = BTreeMap::new();
        m.insert(
            "traj00000_q".to_string(),
            NdArray::f64(vec![3, 1], vec![0.1, 0.2, 0.3]),
        );
        m.insert(
            "traj00000_t".to_string(),
            NdArray::f64(vec![3], vec![0.0, 0.5, 1.0]),
        );
        m.insert(
            "edge_indices".to_string(),
            NdArray::i64(vec![2, 2], vec![0, 1, 1, 0]),
        );
        m.insert("fixed_mask".to_string(), NdArray::bool(vec![2], vec![true, false]));
        m
    }

    #[test]
    fn round_trip_and_byte_stability() {
        let records = sample_records();
        let bytes = write_npz(&records).unwrap();
        let bytes_again = write_npz(&records).unwrap();
        assert_eq!(bytes, bytes_again, "two writes must be byte-identical");
        let back = read_npz(&bytes).unwrap();
        assert_eq!(back, records);
        let third = write_npz(&back).unwrap();
        assert_eq!(third, bytes, "write-read-write must be byte-identical");
    }

    #[test]
    fn entries_are_sorted_by_name() {
        let records = sample_records();
        let bytes = write_npz(&records).unwrap();
        let mut positions = Vec::new();
        for name in records.keys() {
            let needle = format!("{name}.npy");
            let pos = bytes
                .windows(needle.len())
                .position(|w| w == needle.as_bytes())
                .unwrap();
            positions.push(pos);
        }
        let mut sorted = positions.clone();
        sorted.sort_unstable();
        assert_eq!(positions, sorted);
    }

    #[test]
    fn empty_archive_round_trips() {
        let records = BTreeMap::new();
        let bytes = write_npz(&records).unwrap();
        let back = read_npz(&bytes).unwrap();
        assert!(back.is_empty());
    }

    #[test]
    fn corrupted_data_is_rejected() {
        let records = sample_records();
        let mut bytes = write_npz(&records).unwrap();
        // Flip one data byte inside the first entry's payload.
        let needle = b"edge_indices.npy";
        let pos = bytes.windows(needle.len()).position(|w| w == needle).unwrap();
        bytes[pos + needle.len() + 40] ^= 0xFF;
        let err = read_npz(&bytes).unwrap_err();
        assert!(matches!(err, DatasetError::Npz(_) | DatasetError::Npy(_)));
    }

    #[test]
    fn missing_file_error_kind() {
        let err = read_npz_file(Path::new("/nonexistent/trajectories.npz")).unwrap_err();
        assert!(matches!(err, DatasetError::MissingFile(_)));
    }
}
