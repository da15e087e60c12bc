//! Raw-array persistence: a directory holding one little-endian binary file
//! per array plus a plain-text manifest. Bit-exact round trips, no external
//! container format.
//!
//! Manifest line format (whitespace-separated):
//! `name dtype shape axes`, e.g. `kt complex64 4x80x4x768 slice,frame,coil,point`.

use crate::error::{CoreError, Result};
use num_complex::Complex32;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

const MANIFEST_HEADER: &str = "array-container v1 little-endian";
pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementType {
    Float32,
    Complex64,
}

impl ElementType {
    fn name(&self) -> &'static str {
        match self {
            ElementType::Float32 => "float32",
            ElementType::Complex64 => "complex64",
        }
    }

    fn byte_size(&self) -> usize {
        match self {
            ElementType::Float32 => 4,
            ElementType::Complex64 => 8,
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "float32" => Ok(ElementType::Float32),
            "complex64" => Ok(ElementType::Complex64),
            other => Err(CoreError::Corrupt(format!("unknown element type '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    F32(Vec<f32>),
    C64(Vec<Complex32>),
}

impl ArrayData {
    pub fn len(&self) -> usize {
        match self {
            ArrayData::F32(v) => v.len(),
            ArrayData::C64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn element_type(&self) -> ElementType {
        match self {
            ArrayData::F32(_) => ElementType::Float32,
            ArrayData::C64(_) => ElementType::Complex64,
        }
    }

    pub fn as_f32(&self) -> Result<&[f32]> {
        match self {
            ArrayData::F32(v) => Ok(v),
            _ => Err(CoreError::Corrupt("expected float32 array".into())),
        }
    }

    pub fn as_c64(&self) -> Result<&[Complex32]> {
        match self {
            ArrayData::C64(v) => Ok(v),
            _ => Err(CoreError::Corrupt("expected complex64 array".into())),
        }
    }
}

/// One named array with its shape and an axis-order label.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub axes: String,
    pub data: ArrayData,
}

impl NamedArray {
    pub fn f32(name: &str, shape: &[usize], axes: &str, data: Vec<f32>) -> Self {
        NamedArray {
            name: name.to_string(),
            shape: shape.to_vec(),
            axes: axes.to_string(),
            data: ArrayData::F32(data),
        }
    }

    pub fn c64(name: &str, shape: &[usize], axes: &str, data: Vec<Complex32>) -> Self {
        NamedArray {
            name: name.to_string(),
            shape: shape.to_vec(),
            axes: axes.to_string(),
            data: ArrayData::C64(data),
        }
    }

    fn n_elements(&self) -> usize {
        self.shape.iter().product()
    }
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.')
}

/// Write arrays to `dir` (created if needed): a manifest plus `<name>.bin`
/// per array. Overwrites any previous container in the directory.
pub fn save_container(dir: &Path, arrays: &[NamedArray]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    manifest.push_str(MANIFEST_HEADER);
    manifest.push('\n');
    for a in arrays {
        if !valid_name(&a.name) {
            return Err(CoreError::Argument(format!("invalid array name '{}'", a.name)));
        }
        if a.n_elements() != a.data.len() {
            return Err(CoreError::Argument(format!(
                "array '{}': shape {:?} has {} elements but data holds {}",
                a.name,
                a.shape,
                a.n_elements(),
                a.data.len()
            )));
        }
        let shape = a
            .shape
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join("x");
        manifest.push_str(&format!(
            "{} {} {} {}\n",
            a.name,
            a.data.element_type().name(),
            if a.shape.is_empty() { "scalar".to_string() } else { shape },
            if a.axes.is_empty() { "-" } else { &a.axes }
        ));
        let mut w = BufWriter::new(fs::File::create(dir.join(format!("{}.bin", a.name)))?);
        match &a.data {
            ArrayData::F32(v) => {
                for x in v {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
            ArrayData::C64(v) => {
                for x in v {
                    w.write_all(&x.re.to_le_bytes())?;
                    w.write_all(&x.im.to_le_bytes())?;
                }
            }
        }
        w.flush()?;
    }
    fs::write(dir.join(MANIFEST_FILE), manifest)?;
    Ok(())
}

/// Load every array of the container at `dir`, in manifest order.
pub fn load_container(dir: &Path) -> Result<Vec<NamedArray>> {
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.exists() {
        return Err(CoreError::Dependency(format!(
            "missing container at {}",
            dir.display()
        )));
    }
    let text = fs::read_to_string(&manifest_path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == MANIFEST_HEADER => {}
        other => {
            return Err(CoreError::Corrupt(format!(
                "bad manifest header {other:?} in {}",
                manifest_path.display()
            )))
        }
    }
    let mut out = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(CoreError::Corrupt(format!("malformed manifest line '{line}'")));
        }
        let name = fields[0].to_string();
        let dtype = ElementType::parse(fields[1])?;
        let shape: Vec<usize> = if fields[2] == "scalar" {
            Vec::new()
        } else {
            fields[2]
                .split('x')
                .map(|d| {
                    d.parse::<usize>().map_err(|_| {
                        CoreError::Corrupt(format!("bad shape '{}' for array '{name}'", fields[2]))
                    })
                })
                .collect::<Result<Vec<usize>>>()?
        };
        let axes = if fields[3] == "-" { String::new() } else { fields[3].to_string() };
        let n: usize = shape.iter().product();
        let path = dir.join(format!("{name}.bin"));
        let bytes = fs::read(&path)
            .map_err(|_| CoreError::Corrupt(format!("missing binary file for array '{name}'")))?;
        let expected = n * dtype.byte_size();
        if bytes.len() != expected {
            return Err(CoreError::Corrupt(format!(
                "array '{name}': file holds {} bytes, manifest implies {expected}",
                bytes.len()
            )));
        }
        let data = match dtype {
            ElementType::Float32 => ArrayData::F32(
                bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            ),
            ElementType::Complex64 => ArrayData::C64(
                bytes
                    .chunks_exact(8)
                    .map(|c| {
                        Complex32::new(
                            f32::from_le_bytes([c[0], c[1], c[2], c[3]]),
                            f32::from_le_bytes([c[4], c[5], c[6], c[7]]),
                        )
                    })
                    .collect(),
            ),
        };
        out.push(NamedArray { name, shape, axes, data });
    }
    Ok(out)
}

/// Find one array by name in a loaded container.
pub fn find_array<'a>(arrays: &'a [NamedArray], name: &str) -> Result<&'a NamedArray> {
    arrays
        .iter()
        .find(|a| a.name == name)
        .ok_or_else(|| CoreError::Corrupt(format!("container has no array '{name}'")))
}

/// Path helper used by pipeline stages to fail early with a clear message.
pub fn require_container(dir: &Path, what: &str) -> Result<PathBuf> {
    if dir.join(MANIFEST_FILE).exists() {
        Ok(dir.to_path_buf())
    } else {
        Err(CoreError::Dependency(format!(
            "{what} not found: expected container at {}",
            dir.display()
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn complex_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let data: Vec<Complex32> = (0..100)
            .map(|i| Complex32::new((i as f32).sin() * 1e-3, (i as f32).cos() * 1e8))
            .collect();
        let arrays = vec![
            NamedArray::c64("kt", &[4, 25], "coil,point", data.clone()),
            NamedArray::f32("w", &[25], "point", (0..25).map(|i| i as f32 * 0.1).collect()),
        ];
        save_container(dir.path(), &arrays).unwrap();
        let loaded = load_container(dir.path()).unwrap();
        assert_eq!(loaded, arrays);
        let kt = find_array(&loaded, "kt").unwrap();
        assert_eq!(kt.data.as_c64().unwrap(), &data[..]);
    }

    #[test]
    fn empty_container_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        save_container(dir.path(), &[]).unwrap();
        assert!(load_container(dir.path()).unwrap().is_empty());
    }

    #[test]
    fn truncated_file_names_the_array() {
        let dir = tempfile::tempdir().unwrap();
        let arrays = vec![NamedArray::f32("weights", &[10], "i", vec![1.0; 10])];
        save_container(dir.path(), &arrays).unwrap();
        let bin = dir.path().join("weights.bin");
        let bytes = std::fs::read(&bin).unwrap();
        std::fs::write(&bin, &bytes[..bytes.len() - 4]).unwrap();
        let err = load_container(dir.path()).unwrap_err();
        match err {
            CoreError::Corrupt(msg) => assert!(msg.contains("weights"), "{msg}"),
            other => panic!("expected corruption error, got {other:?}"),
        }
    }

    #[test]
    fn missing_container_is_dependency_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_container(&dir.path().join("nope")).unwrap_err();
        assert!(matches!(err, CoreError::Dependency(_)));
    }

    #[test]
    fn shape_data_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let bad = vec![NamedArray::f32("x", &[3, 3], "a,b", vec![0.0; 8])];
        assert!(save_container(dir.path(), &bad).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_arbitrary_f32(data in proptest::collection::vec(any::<f32>(), 0..200)) {
            // NaN payloads included: bit-exactness is byte-level.
            let dir = tempfile::tempdir().unwrap();
            let n = data.len();
            let arrays = vec![NamedArray::f32("x", &[n], "i", data.clone())];
            save_container(dir.path(), &arrays).unwrap();
            let loaded = load_container(dir.path()).unwrap();
            let got = loaded[0].data.as_f32().unwrap();
            prop_assert_eq!(got.len(), n);
            for (a, b) in got.iter().zip(data.iter()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
