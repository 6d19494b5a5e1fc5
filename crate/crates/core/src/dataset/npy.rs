//! Bit-exact NPY (version 1.0) array serialization.
//!
//! The writer pins every degree of freedom the format leaves open: C order,
//! little-endian `<f8`/`<i8`/`|b1` dtypes, header padded with spaces so the
//! data section starts on a 64-byte boundary, exactly one trailing newline.
//! Two writes of the same array are byte-identical.

use super::DatasetError;

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const HEADER_ALIGN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F64,
    I64,
    Bool,
}

impl Dtype {
    pub fn descr(&self) -> &'static str {
        match self {
            Dtype::F64 => "<f8",
            Dtype::I64 => "<i8",
            Dtype::Bool => "|b1",
        }
    }

    pub fn item_size(&self) -> usize {
        match self {
            Dtype::F64 | Dtype::I64 => 8,
            Dtype::Bool => 1,
        }
    }

    fn from_descr(s: &str) -> Option<Dtype> {
        match s {
            "<f8" => Some(Dtype::F64),
            "<i8" => Some(Dtype::I64),
            "|b1" => Some(Dtype::Bool),
            _ => None,
        }
    }
}

/// Typed n-dimensional array in C (row-major) order.
#[derive(Debug, Clone, PartialEq)]
pub enum NdArray {
    F64 { shape: Vec<usize>, data: Vec<f64> },
    I64 { shape: Vec<usize>, data: Vec<i64> },
    Bool { shape: Vec<usize>, data: Vec<bool> },
}

impl NdArray {
    pub fn f64(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len());
        NdArray::F64 { shape, data }
    }

    pub fn i64(shape: Vec<usize>, data: Vec<i64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len());
        NdArray::I64 { shape, data }
    }

    pub fn bool(shape: Vec<usize>, data: Vec<bool>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len());
        NdArray::Bool { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            NdArray::F64 { shape, .. } | NdArray::I64 { shape, .. } | NdArray::Bool { shape, .. } => {
                shape
            }
        }
    }

    pub fn dtype(&self) -> Dtype {
        match self {
            NdArray::F64 { .. } => Dtype::F64,
            NdArray::I64 { .. } => Dtype::I64,
            NdArray::Bool { .. } => Dtype::Bool,
        }
    }

    pub fn element_count(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn as_f64s(&self) -> Option<&[f64]> {
        match self {
            NdArray::F64 { data, .. } => Some(data),
            _ => None,
        }
    }

    pub fn as_i64s(&self) -> Option<&[i64]> {
        match self {
            NdArray::I64 { data, .. } => Some(data),
            _ => None,
        }
    }

    pub fn as_bools(&self) -> Option<&[bool]> {
        match self {
            NdArray::Bool { data, .. } => Some(data),
            _ => None,
        }
    }
}

fn shape_literal(shape: &[usize]) -> String {
    match shape.len() {
        0 => "()".to_string(),
        1 => format!("({},)", shape[0]),
        _ => {
            let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
            format!("({})", dims.join(", "))
        }
    }
}

/// Serialize one array into the NPY v1.0 byte layout.
pub fn write_npy(arr: &NdArray) -> Vec<u8> {
    let dict = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}",
        arr.dtype().descr(),
        shape_literal(arr.shape())
    );
    // magic + version + u16 length prefix = 10 bytes before the dict.
    let prefix = MAGIC.len() + 2 + 2;
    let unpadded = prefix + dict.len() + 1;
    let padding = (HEADER_ALIGN - unpadded % HEADER_ALIGN) % HEADER_ALIGN;
    let header_len = dict.len() + padding + 1;
    assert!(header_len <= u16::MAX as usize, "header too large for v1.0");

    let mut out = Vec::with_capacity(prefix + header_len + arr.element_count() * arr.dtype().item_size());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header_len as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out.extend(std::iter::repeat(b' ').take(padding));
    out.push(b'\n');
    debug_assert_eq!(out.len() % HEADER_ALIGN, 0);

    match arr {
        NdArray::F64 { data, .. } => {
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        NdArray::I64 { data, .. } => {
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        NdArray::Bool { data, .. } => {
            for v in data {
                out.push(u8::from(*v));
            }
        }
    }
    out
}

/// Parse an NPY v1.0 (or v2.0) byte stream.
pub fn read_npy(bytes: &[u8]) -> Result<NdArray, DatasetError> {
    let malformed = |msg: &str| DatasetError::Npy(msg.to_string());
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(malformed("missing NPY magic"));
    }
    let (major, minor) = (bytes[6], bytes[7]);
    let (header_len, header_start) = match (major, minor) {
        (1, 0) => (
            u16::from_le_bytes([bytes[8], bytes[9]]) as usize,
            10usize,
        ),
        (2, 0) => {
            if bytes.len() < 12 {
                return Err(malformed("truncated v2.0 header length"));
            }
            (
                u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize,
                12usize,
            )
        }
        _ => return Err(malformed("unsupported NPY version")),
    };
    let data_start = header_start + header_len;
    if bytes.len() < data_start {
        return Err(malformed("truncated header"));
    }
    let header = std::str::from_utf8(&bytes[header_start..data_start])
        .map_err(|_| malformed("header is not UTF-8"))?;

    let descr = extract_quoted(header, "descr").ok_or_else(|| malformed("missing descr"))?;
    let dtype = Dtype::from_descr(&descr)
        .ok_or_else(|| DatasetError::Npy(format!("unsupported dtype {descr:?}")))?;
    let fortran = extract_bool(header, "fortran_order").ok_or_else(|| malformed("missing fortran_order"))?;
    if fortran {
        return Err(malformed("fortran_order arrays are not supported"));
    }
    let shape = extract_shape(header).ok_or_else(|| malformed("missing shape"))?;

    let count: usize = shape.iter().product();
    let expected = count * dtype.item_size();
    let data = &bytes[data_start..];
    if data.len() < expected {
        return Err(DatasetError::Npy(format!(
            "data section too short: expected {expected} bytes, got {}",
            data.len()
        )));
    }
    let arr = match dtype {
        Dtype::F64 => {
            let values = data[..expected]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            NdArray::F64 { shape, data: values }
        }
        Dtype::I64 => {
            let values = data[..expected]
                .chunks_exact(8)
                .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            NdArray::I64 { shape, data: values }
        }
        Dtype::Bool => {
            let values = data[..expected].iter().map(|b| *b != 0).collect();
            NdArray::Bool { shape, data: values }
        }
    };
    Ok(arr)
}

fn extract_quoted(header: &str, key: &str) -> Option<String> {
    let pos = header.find(&format!("'{key}'"))?;
    let rest = &header[pos + key.len() + 2..];
    let colon = rest.find(':')?;
    let rest = rest[colon + 1..].trim_start();
    let quote = rest.chars().next()?;
    if quote != '\'' && quote != '"' {
        return None;
    }
    let end = rest[1..].find(quote)?;
    Some(rest[1..1 + end].to_string())
}

fn extract_bool(header: &str, key: &str) -> Option<bool> {
    let pos = header.find(&format!("'{key}'"))?;
    let rest = &header[pos + key.len() + 2..];
    let colon = rest.find(':')?;
    let rest = rest[colon + 1..].trim_start();
    if rest.starts_with("True") {
        Some(true)
    } else if rest.starts_with("False") {
        Some(false)
    } else {
        None
    }
}

fn extract_shape(header: &str) -> Option<Vec<usize>> {
    let pos = header.find("'shape'")?;
    let rest = &header[pos + 7..];
    let open = rest.find('(')?;
    let close = rest[open..].find(')')? + open;
    let inner = &rest[open + 1..close];
    let mut shape = Vec::new();
    for piece in inner.split(',') {
        let piece = piece.trim();
        if piece.is_empty() {
            continue;
        }
        shape.push(piece.parse().ok()?);
    }
    Some(shape)
}
