//! NIfTI-1 single-file (`n+1`) and header/image pair (`ni1`) volumes,
//! optionally gzip-compressed.
//!
//! Volumes are returned in canonical orientation: voxel axis `a` runs along
//! world axis `a` with increasing coordinate. Only axis permutations and
//! flips of the header affine are applied; oblique affines are rejected.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{BigEndian, ByteOrder, LittleEndian};
use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, Grid, ScalarVolume, Spacing, Unit};

const HEADER_SIZE: usize = 348;
const SINGLE_FILE_OFFSET: usize = 352;
/// Largest disagreement (mm) tolerated between affine column norms and
/// `pixdim`.
pub const SPACING_TOLERANCE_MM: f64 = 1e-3;
/// Relative size of off-axis affine entries still treated as zero.
const OBLIQUE_RTOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    U8,
    I16,
    I32,
    F32,
    F64,
}

impl DataKind {
    pub fn code(self) -> i16 {
        match self {
            DataKind::U8 => 2,
            DataKind::I16 => 4,
            DataKind::I32 => 8,
            DataKind::F32 => 16,
            DataKind::F64 => 64,
        }
    }

    pub fn from_code(code: i16) -> Option<DataKind> {
        Some(match code {
            2 => DataKind::U8,
            4 => DataKind::I16,
            8 => DataKind::I32,
            16 => DataKind::F32,
            64 => DataKind::F64,
            _ => return None,
        })
    }

    pub fn bytes(self) -> usize {
        match self {
            DataKind::U8 => 1,
            DataKind::I16 => 2,
            DataKind::I32 | DataKind::F32 => 4,
            DataKind::F64 => 8,
        }
    }

    fn range(self) -> Option<(f64, f64)> {
        match self {
            DataKind::U8 => Some((0.0, u8::MAX as f64)),
            DataKind::I16 => Some((i16::MIN as f64, i16::MAX as f64)),
            DataKind::I32 => Some((i32::MIN as f64, i32::MAX as f64)),
            DataKind::F32 | DataKind::F64 => None,
        }
    }
}

/// Decoded header fields needed to load a volume.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeFileHeader {
    /// Dimensions in file order.
    pub dims: [usize; 3],
    /// `pixdim[1..=3]`.
    pub pixdim: [f64; 3],
    pub data_kind: DataKind,
    pub scale_slope: f64,
    pub scale_intercept: f64,
    /// Voxel-to-world affine (mm), rows x, y, z.
    pub affine: [[f64; 4]; 3],
    pub big_endian: bool,
    pub vox_offset: usize,
    pub single_file: bool,
}

impl VolumeFileHeader {
    /// Scaling as applied on load: a zero or non-finite slope means none.
    pub fn scaling(&self) -> Option<(f64, f64)> {
        if self.scale_slope != 0.0 && self.scale_slope.is_finite() {
            let inter = if self.scale_intercept.is_finite() { self.scale_intercept } else { 0.0 };
            Some((self.scale_slope, inter))
        } else {
            None
        }
    }

    /// For each file axis: the world axis it runs along and whether it runs
    /// against it.
    pub fn orientation(&self) -> std::result::Result<[(usize, bool); 3], String> {
        let mut out = [(0usize, false); 3];
        let mut used = [false; 3];
        for (col, o) in out.iter_mut().enumerate() {
            let v = [self.affine[0][col], self.affine[1][col], self.affine[2][col]];
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(format!("affine column {col} is degenerate"));
            }
            let row = (0..3).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs())).unwrap();
            if (0..3).any(|r| r != row && v[r].abs() > OBLIQUE_RTOL * norm) {
                return Err(format!("oblique affine (column {col} = {v:?}) is not supported"));
            }
            if used[row] {
                return Err("affine maps two voxel axes onto one world axis".into());
            }
            used[row] = true;
            *o = (row, v[row] < 0.0);
        }
        Ok(out)
    }

    /// Affine column norms.
    pub fn affine_spacing(&self) -> [f64; 3] {
        let mut s = [0.0; 3];
        for (col, s) in s.iter_mut().enumerate() {
            *s = (0..3).map(|r| self.affine[r][col].powi(2)).sum::<f64>().sqrt();
        }
        s
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        MultiGzDecoder::new(&raw[..]).read_to_end(&mut out).map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn quaternion_affine(b: f64, c: f64, d: f64, qfac: f64, pixdim: [f64; 3], offset: [f64; 3]) -> [[f64; 4]; 3] {
    let a = (1.0 - (b * b + c * c + d * d)).max(0.0).sqrt();
    let r = [
        [a * a + b * b - c * c - d * d, 2.0 * (b * c - a * d), 2.0 * (b * d + a * c)],
        [2.0 * (b * c + a * d), a * a + c * c - b * b - d * d, 2.0 * (c * d - a * b)],
        [2.0 * (b * d - a * c), 2.0 * (c * d + a * b), a * a + d * d - c * c - b * b],
    ];
    let scale = [pixdim[0], pixdim[1], pixdim[2] * qfac];
    let mut m = [[0.0; 4]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = r[i][j] * scale[j];
        }
        m[i][3] = offset[i];
    }
    m
}

fn parse_header<B: ByteOrder>(h: &[u8], path: &Path, big_endian: bool) -> Result<VolumeFileHeader> {
    let i16_at = |o: usize| B::read_i16(&h[o..o + 2]);
    let f32_at = |o: usize| B::read_f32(&h[o..o + 4]) as f64;

    let magic = &h[344..348];
    let single_file = match magic {
        b"n+1\0" => true,
        b"ni1\0" => false,
        _ => return Err(Error::format(path, format!("bad magic {magic:?}; not a NIfTI-1 file"))),
    };

    let ndim = i16_at(40);
    if !(1..=7).contains(&ndim) {
        return Err(Error::format(path, format!("dim[0] = {ndim} out of range")));
    }
    let mut dims = [1usize; 3];
    for k in 1..=7usize {
        let d = i16_at(40 + 2 * k);
        if k <= ndim as usize {
            if d <= 0 {
                return Err(Error::format(path, format!("dim[{k}] = {d} must be positive")));
            }
            if k <= 3 {
                dims[k - 1] = d as usize;
            } else if d != 1 {
                return Err(Error::format(path, format!("only 3D volumes are supported (dim[{k}] = {d})")));
            }
        }
    }

    let code = i16_at(70);
    let data_kind =
        DataKind::from_code(code).ok_or_else(|| Error::format(path, format!("unsupported datatype code {code}")))?;
    let pixdim = [f32_at(80).abs(), f32_at(84).abs(), f32_at(88).abs()];
    let qfac = if f32_at(76) < 0.0 { -1.0 } else { 1.0 };
    let vox_offset = f32_at(108);
    if !(vox_offset >= 0.0 && vox_offset.fract() == 0.0) {
        return Err(Error::format(path, format!("invalid vox_offset {vox_offset}")));
    }

    let qform_code = i16_at(252);
    let sform_code = i16_at(254);
    let affine = if sform_code > 0 {
        let mut m = [[0.0; 4]; 3];
        for (r, row) in m.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = f32_at(280 + 16 * r + 4 * c);
            }
        }
        m
    } else if qform_code > 0 {
        quaternion_affine(
            f32_at(256),
            f32_at(260),
            f32_at(264),
            qfac,
            pixdim,
            [f32_at(268), f32_at(272), f32_at(276)],
        )
    } else {
        [[pixdim[0], 0.0, 0.0, 0.0], [0.0, pixdim[1], 0.0, 0.0], [0.0, 0.0, pixdim[2], 0.0]]
    };

    Ok(VolumeFileHeader {
        dims,
        pixdim,
        data_kind,
        scale_slope: f32_at(112),
        scale_intercept: f32_at(116),
        affine,
        big_endian,
        vox_offset: vox_offset as usize,
        single_file,
    })
}

fn decode_header(bytes: &[u8], path: &Path) -> Result<VolumeFileHeader> {
    if bytes.len() < HEADER_SIZE {
        return Err(Error::format(path, format!("file too short for a NIfTI-1 header ({} bytes)", bytes.len())));
    }
    let h = &bytes[..HEADER_SIZE];
    if LittleEndian::read_i32(&h[0..4]) == HEADER_SIZE as i32 {
        parse_header::<LittleEndian>(h, path, false)
    } else if BigEndian::read_i32(&h[0..4]) == HEADER_SIZE as i32 {
        parse_header::<BigEndian>(h, path, true)
    } else {
        Err(Error::format(path, "sizeof_hdr is not 348 in either byte order"))
    }
}

/// Reads and decodes the header only.
pub fn read_header(path: impl AsRef<Path>) -> Result<VolumeFileHeader> {
    let path = path.as_ref();
    decode_header(&read_bytes(path)?, path)
}

fn image_path(header_path: &Path) -> Result<PathBuf> {
    let name = header_path.to_string_lossy();
    let stem = name
        .strip_suffix(".hdr.gz")
        .or_else(|| name.strip_suffix(".hdr"))
        .ok_or_else(|| Error::format(header_path, "ni1 header file must end in .hdr or .hdr.gz"))?;
    let candidates = [format!("{stem}.img"), format!("{stem}.img.gz")];
    candidates
        .iter()
        .map(PathBuf::from)
        .find(|p| p.exists())
        .ok_or_else(|| Error::format(header_path, format!("image file {}.img not found", stem)))
}

fn decode_samples(header: &VolumeFileHeader, payload: &[u8], path: &Path) -> Result<Vec<f64>> {
    let n = header.dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
    let n = n.ok_or_else(|| Error::format(path, "dimension overflow"))?;
    let kind = header.data_kind;
    let need = n.checked_mul(kind.bytes()).ok_or_else(|| Error::format(path, "dimension overflow"))?;
    if payload.len() < need {
        return Err(Error::format(path, format!("image data truncated: {} of {need} bytes", payload.len())));
    }
    let p = &payload[..need];
    let mut out = vec![0.0f64; n];
    macro_rules! fill {
        ($order:ty) => {
            match kind {
                DataKind::U8 => p.iter().zip(out.iter_mut()).for_each(|(&b, o)| *o = b as f64),
                DataKind::I16 => p.chunks_exact(2).zip(out.iter_mut()).for_each(|(c, o)| *o = <$order>::read_i16(c) as f64),
                DataKind::I32 => p.chunks_exact(4).zip(out.iter_mut()).for_each(|(c, o)| *o = <$order>::read_i32(c) as f64),
                DataKind::F32 => p.chunks_exact(4).zip(out.iter_mut()).for_each(|(c, o)| *o = <$order>::read_f32(c) as f64),
                DataKind::F64 => p.chunks_exact(8).zip(out.iter_mut()).for_each(|(c, o)| *o = <$order>::read_f64(c)),
            }
        };
    }
    if header.big_endian {
        fill!(BigEndian)
    } else {
        fill!(LittleEndian)
    }
    if let Some(index) = out.iter().position(|v| v.is_nan()) {
        return Err(Error::format(path, format!("NaN sample at voxel index {index}")));
    }
    if let Some((slope, inter)) = header.scaling() {
        for v in &mut out {
            *v = *v * slope + inter;
        }
    }
    if let Some(index) = out.iter().position(|v| !v.is_finite()) {
        return Err(Error::format(path, format!("non-finite sample at voxel index {index}")));
    }
    Ok(out)
}

/// Reorders file-order samples into the canonical orientation.
fn canonicalize(
    header: &VolumeFileHeader,
    samples: Vec<f64>,
    path: &Path,
) -> Result<(Grid, Vec<f64>)> {
    let orient = header.orientation().map_err(|m| Error::format(path, m))?;
    let norms = header.affine_spacing();
    for a in 0..3 {
        if (norms[a] - header.pixdim[a]).abs() > SPACING_TOLERANCE_MM {
            return Err(Error::format(
                path,
                format!("affine spacing {:?} disagrees with pixdim {:?}", norms, header.pixdim),
            ));
        }
    }
    let fd = header.dims;
    let mut dims = [0usize; 3];
    let mut spacing = [0.0f64; 3];
    for a in 0..3 {
        dims[orient[a].0] = fd[a];
        spacing[orient[a].0] = norms[a];
    }
    let spacing = Spacing::new(spacing[0], spacing[1], spacing[2]).map_err(|e| Error::format(path, e.to_string()))?;
    let grid = Grid::new(dims, spacing)?;
    if orient == [(0, false), (1, false), (2, false)] {
        return Ok((grid, samples));
    }
    let mut out = vec![0.0; samples.len()];
    let mut i = 0;
    for k in 0..fd[2] {
        for j in 0..fd[1] {
            for ii in 0..fd[0] {
                let mut c = [0usize; 3];
                for (a, &f) in [ii, j, k].iter().enumerate() {
                    let (axis, flip) = orient[a];
                    c[axis] = if flip { fd[a] - 1 - f } else { f };
                }
                out[grid.index(c[0], c[1], c[2])] = samples[i];
                i += 1;
            }
        }
    }
    Ok((grid, out))
}

fn load(path: &Path) -> Result<(Grid, Vec<f64>)> {
    let bytes = read_bytes(path)?;
    let header = decode_header(&bytes, path)?;
    let samples = if header.single_file {
        if header.vox_offset < HEADER_SIZE {
            return Err(Error::format(path, format!("vox_offset {} inside the header", header.vox_offset)));
        }
        let payload = bytes.get(header.vox_offset..).unwrap_or(&[]);
        decode_samples(&header, payload, path)?
    } else {
        let img = image_path(path)?;
        let data = read_bytes(&img)?;
        decode_samples(&header, data.get(header.vox_offset..).unwrap_or(&[]), &img)?
    };
    canonicalize(&header, samples, path)
}

/// Loads a scalar volume, applying slope/intercept scaling.
pub fn read_volume(path: impl AsRef<Path>, unit: Unit) -> Result<ScalarVolume> {
    let path = path.as_ref();
    let (grid, data) = load(path)?;
    ScalarVolume::new(grid, data, unit).map_err(|e| Error::format(path, e.to_string()))
}

#[derive(Debug, Clone)]
pub struct MaskRead {
    pub mask: BinaryMask,
    /// Voxels whose value was neither 0 nor 1 (they count as foreground).
    pub non_binary: usize,
}

/// Loads a mask: every nonzero sample is foreground.
pub fn read_mask_counted(path: impl AsRef<Path>) -> Result<MaskRead> {
    let (grid, data) = load(path.as_ref())?;
    let non_binary = data.iter().filter(|&&v| v != 0.0 && v != 1.0).count();
    let mask = BinaryMask::new(grid, data.iter().map(|&v| v != 0.0).collect())?;
    Ok(MaskRead { mask, non_binary })
}

/// Like [`read_mask_counted`], logging a warning for non-binary samples.
pub fn read_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let r = read_mask_counted(path)?;
    if r.non_binary > 0 {
        warn!("{}: {} voxels hold values other than 0/1", path.display(), r.non_binary);
    }
    Ok(r.mask)
}

fn encode_header<B: ByteOrder>(grid: &Grid, kind: DataKind) -> Vec<u8> {
    let mut h = vec![0u8; SINGLE_FILE_OFFSET];
    B::write_i32(&mut h[0..4], HEADER_SIZE as i32);
    let dim = [3i16, grid.dims[0] as i16, grid.dims[1] as i16, grid.dims[2] as i16, 1, 1, 1, 1];
    for (k, d) in dim.iter().enumerate() {
        B::write_i16(&mut h[40 + 2 * k..], *d);
    }
    B::write_i16(&mut h[70..72], kind.code());
    B::write_i16(&mut h[72..74], (kind.bytes() * 8) as i16);
    let s = grid.spacing.as_array();
    let pixdim = [1.0f32, s[0] as f32, s[1] as f32, s[2] as f32, 1.0, 1.0, 1.0, 1.0];
    for (k, p) in pixdim.iter().enumerate() {
        B::write_f32(&mut h[76 + 4 * k..], *p);
    }
    B::write_f32(&mut h[108..112], SINGLE_FILE_OFFSET as f32);
    B::write_f32(&mut h[112..116], 1.0);
    h[123] = 10; // xyzt_units: mm, s
    B::write_i16(&mut h[252..254], 1);
    B::write_i16(&mut h[254..256], 1);
    for r in 0..3 {
        B::write_f32(&mut h[280 + 16 * r + 4 * r..], s[r] as f32);
    }
    h[344..348].copy_from_slice(b"n+1\0");
    h
}

fn encode<B: ByteOrder>(grid: &Grid, values: &[f64], kind: DataKind) -> Result<Vec<u8>> {
    if grid.dims.iter().any(|&d| d > i16::MAX as usize) {
        return Err(Error::InvalidParameter(format!("dims {:?} exceed the NIfTI-1 limit", grid.dims)));
    }
    if let Some((lo, hi)) = kind.range() {
        if let Some(i) = values.iter().position(|&v| v.fract() != 0.0 || v < lo || v > hi) {
            return Err(Error::InvalidParameter(format!(
                "sample {} at voxel index {i} is not representable as {kind:?}",
                values[i]
            )));
        }
    }
    let mut out = encode_header::<B>(grid, kind);
    let start = out.len();
    out.resize(start + values.len() * kind.bytes(), 0);
    let body = &mut out[start..];
    match kind {
        DataKind::U8 => body.iter_mut().zip(values).for_each(|(b, &v)| *b = v as u8),
        DataKind::I16 => body.chunks_exact_mut(2).zip(values).for_each(|(c, &v)| B::write_i16(c, v as i16)),
        DataKind::I32 => body.chunks_exact_mut(4).zip(values).for_each(|(c, &v)| B::write_i32(c, v as i32)),
        DataKind::F32 => body.chunks_exact_mut(4).zip(values).for_each(|(c, &v)| B::write_f32(c, v as f32)),
        DataKind::F64 => body.chunks_exact_mut(8).zip(values).for_each(|(c, &v)| B::write_f64(c, v)),
    }
    Ok(out)
}

/// Serializes a volume as a single-file NIfTI-1 image with a diagonal
/// affine; `big_endian` selects the byte order.
pub fn encode_nifti(grid: &Grid, values: &[f64], kind: DataKind, big_endian: bool) -> Result<Vec<u8>> {
    if values.len() != grid.len() {
        return Err(Error::InvalidParameter("sample count does not match grid".into()));
    }
    if big_endian {
        encode::<BigEndian>(grid, values, kind)
    } else {
        encode::<LittleEndian>(grid, values, kind)
    }
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let gz = path.to_string_lossy().ends_with(".gz");
    let data = if gz {
        // GzEncoder writes a zero mtime, so output is reproducible
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(bytes).map_err(|e| Error::io(path, e))?;
        enc.finish().map_err(|e| Error::io(path, e))?
    } else {
        bytes.to_vec()
    };
    fs::write(path, data).map_err(|e| Error::io(path, e))
}

/// Writes a volume; a path ending in `.gz` is gzip-compressed. Integer kinds
/// require integral in-range samples.
pub fn write_volume(path: impl AsRef<Path>, vol: &ScalarVolume, kind: DataKind) -> Result<()> {
    let path = path.as_ref();
    write_bytes(path, &encode_nifti(vol.grid(), vol.data(), kind, false)?)
}

/// Writes a mask as U8 0/1 samples.
pub fn write_mask(path: impl AsRef<Path>, mask: &BinaryMask) -> Result<()> {
    write_volume(path, &mask.to_volume(), DataKind::U8)
}
