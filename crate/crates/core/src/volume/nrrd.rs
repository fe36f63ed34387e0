//! Reader and writer for the NRRD subset used by labelmaps and `.seg.nrrd` segmentations.
//!
//! Supported: `NRRD0004`/`NRRD0005`, 3D grids and 4D layered segmentations,
//! `uint8`/`uint16`/`int16`/`uint32` samples, `raw` and `gzip` encodings,
//! attached data only. Unknown fields are ignored.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use super::{LabelVolume, Vec3, VoxelGeometry, BACKGROUND};
use crate::error::{Error, Result};
use crate::grid::Grid3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NrrdEncoding {
    #[default]
    Raw,
    Gzip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SampleType {
    U8,
    U16,
    I16,
    U32,
}

impl SampleType {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "uchar" | "unsigned char" | "uint8" | "uint8_t" => Self::U8,
            "ushort" | "unsigned short" | "unsigned short int" | "uint16" | "uint16_t" => Self::U16,
            "short" | "short int" | "signed short" | "signed short int" | "int16" | "int16_t" => {
                Self::I16
            }
            "uint" | "unsigned int" | "uint32" | "uint32_t" => Self::U32,
            other => {
                return Err(Error::Unsupported {
                    field: "type",
                    value: other.to_string(),
                })
            }
        })
    }

    fn size(self) -> usize {
        match self {
            Self::U8 => 1,
            Self::U16 | Self::I16 => 2,
            Self::U32 => 4,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Self::U8 => "uint8",
            Self::U16 => "uint16",
            Self::I16 => "int16",
            Self::U32 => "uint32",
        }
    }
}

#[derive(Debug, Default)]
struct Header {
    fields: BTreeMap<String, String>,
    keyvals: BTreeMap<String, String>,
}

impl Header {
    fn field(&self, name: &str) -> Option<&str> {
        self.fields.get(name).map(String::as_str)
    }

    fn required(&self, name: &'static str) -> Result<&str> {
        self.field(name)
            .ok_or_else(|| Error::MalformedHeader(format!("missing required field `{name}`")))
    }
}

#[derive(Debug)]
struct Segment {
    index: usize,
    name: String,
    value: u32,
    layer: usize,
}

/// Parses an NRRD labelmap, discarding warnings.
pub fn parse_nrrd(bytes: &[u8]) -> Result<LabelVolume> {
    parse_nrrd_with_warnings(bytes).map(|(v, _)| v)
}

/// Parses an NRRD labelmap. Warnings report recoverable oddities such as
/// overlapping segments in layered files.
pub fn parse_nrrd_with_warnings(bytes: &[u8]) -> Result<(LabelVolume, Vec<String>)> {
    let (header_text, data) = split_header(bytes)?;
    let header = parse_header(header_text)?;
    let mut warnings = Vec::new();

    if header.field("data file").is_some() || header.field("datafile").is_some() {
        return Err(Error::Unsupported {
            field: "data file",
            value: "detached data".into(),
        });
    }
    for skip in ["line skip", "lineskip", "byte skip", "byteskip"] {
        if let Some(v) = header.field(skip) {
            if v.trim() != "0" {
                return Err(Error::Unsupported {
                    field: "skip",
                    value: format!("{skip}: {v}"),
                });
            }
        }
    }

    let dimension: usize = header
        .required("dimension")?
        .trim()
        .parse()
        .map_err(|_| Error::MalformedHeader("bad `dimension`".into()))?;
    if !(dimension == 3 || dimension == 4) {
        return Err(Error::Unsupported {
            field: "dimension",
            value: dimension.to_string(),
        });
    }
    let sample = SampleType::parse(header.required("type")?.trim())?;
    let encoding = match header.required("encoding")?.trim() {
        "raw" => NrrdEncoding::Raw,
        "gzip" | "gz" => NrrdEncoding::Gzip,
        other => {
            return Err(Error::Unsupported {
                field: "encoding",
                value: other.to_string(),
            })
        }
    };
    let big_endian = match header.field("endian").map(str::trim) {
        Some("little") => false,
        Some("big") => true,
        Some(other) => {
            return Err(Error::Unsupported {
                field: "endian",
                value: other.to_string(),
            })
        }
        None if sample.size() > 1 => {
            return Err(Error::MalformedHeader("missing `endian` for multi-byte type".into()))
        }
        None => false,
    };
    let sizes: Vec<usize> = header
        .required("sizes")?
        .split_whitespace()
        .map(|s| s.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::MalformedHeader("bad `sizes`".into()))?;
    if sizes.len() != dimension || sizes.contains(&0) {
        return Err(Error::MalformedHeader(format!(
            "`sizes` must list {dimension} positive integers"
        )));
    }

    let space = match header.field("space").map(str::trim) {
        Some(s @ ("LPS" | "RAS" | "left-posterior-superior" | "right-anterior-superior")) => {
            Some(s.to_string())
        }
        Some(other) => {
            return Err(Error::Unsupported {
                field: "space",
                value: other.to_string(),
            })
        }
        None => None,
    };

    let axis_dirs = match header.field("space directions") {
        Some(s) => {
            let dirs = parse_directions(s)?;
            if dirs.len() != dimension {
                return Err(Error::MalformedHeader(
                    "`space directions` count differs from `dimension`".into(),
                ));
            }
            Some(dirs)
        }
        None => None,
    };

    // The list (layer) axis of a 4D file is the one without a space direction.
    let list_axis = if dimension == 4 {
        let from_dirs = axis_dirs
            .as_ref()
            .and_then(|d| d.iter().position(Option::is_none));
        let from_kinds = header.field("kinds").and_then(|k| {
            k.split_whitespace()
                .position(|t| matches!(t, "list" | "vector" | "point" | "covariant-vector"))
        });
        Some(from_dirs.or(from_kinds).unwrap_or(0))
    } else {
        None
    };
    let spatial_axes: Vec<usize> = (0..dimension).filter(|&a| Some(a) != list_axis).collect();
    let dims = [sizes[spatial_axes[0]], sizes[spatial_axes[1]], sizes[spatial_axes[2]]];

    let origin = match header.field("space origin") {
        Some(s) => parse_vector(s.trim())?,
        None => Vec3::zeros(),
    };
    let geometry = match &axis_dirs {
        Some(dirs) => {
            let mut cols = [Vec3::zeros(); 3];
            for (slot, &a) in cols.iter_mut().zip(&spatial_axes) {
                *slot = dirs[a].ok_or_else(|| {
                    Error::MalformedHeader("spatial axis has `none` space direction".into())
                })?;
            }
            VoxelGeometry::from_space_directions(dims, cols, origin)?
        }
        None => {
            let spacing = match header.field("spacings") {
                Some(s) => {
                    let vals: Vec<f64> = s
                        .split_whitespace()
                        .map(|t| t.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| Error::MalformedHeader("bad `spacings`".into()))?;
                    if vals.len() != dimension {
                        return Err(Error::MalformedHeader("`spacings` count mismatch".into()));
                    }
                    [vals[spatial_axes[0]], vals[spatial_axes[1]], vals[spatial_axes[2]]]
                }
                None => [1.0; 3],
            };
            VoxelGeometry::new(dims, spacing.into(), origin, super::Mat3::identity())?
        }
    };

    let total: usize = sizes.iter().product();
    let expected = total * sample.size();
    let raw = match encoding {
        NrrdEncoding::Raw => data.to_vec(),
        NrrdEncoding::Gzip => {
            let mut out = Vec::with_capacity(expected);
            MultiGzDecoder::new(data)
                .read_to_end(&mut out)
                .map_err(|e| Error::MalformedHeader(format!("gzip payload: {e}")))?;
            out
        }
    };
    if raw.len() != expected {
        return Err(Error::DataSize {
            expected,
            found: raw.len(),
        });
    }
    let samples = decode_samples(&raw, sample, big_endian)?;
    let segments = parse_segments(&header)?;

    let volume = match list_axis {
        None => {
            let mut table = BTreeMap::new();
            for seg in &segments {
                if table.insert(seg.value, seg.name.clone()).is_some() {
                    return Err(Error::MalformedHeader(format!(
                        "segment label value {} used twice",
                        seg.value
                    )));
                }
            }
            let labels = Grid3::from_vec(dims, samples).expect("size checked above");
            LabelVolume::new(geometry, labels, table)?
        }
        Some(list_axis) => collapse_layers(
            geometry,
            &samples,
            &sizes,
            list_axis,
            &segments,
            &mut warnings,
        )?,
    };
    Ok((volume.with_space(space), warnings))
}

fn split_header(bytes: &[u8]) -> Result<(&str, &[u8])> {
    let lf = find(bytes, b"\n\n").map(|p| (p, 2));
    let crlf = find(bytes, b"\r\n\r\n").map(|p| (p, 4));
    let (end, skip) = match (lf, crlf) {
        (Some(a), Some(b)) => {
            if b.0 < a.0 {
                b
            } else {
                a
            }
        }
        (a, b) => a
            .or(b)
            .ok_or_else(|| Error::MalformedHeader("no blank line after header".into()))?,
    };
    let text = std::str::from_utf8(&bytes[..end])
        .map_err(|_| Error::MalformedHeader("header is not valid UTF-8".into()))?;
    Ok((text, &bytes[end + skip..]))
}

fn find(hay: &[u8], needle: &[u8]) -> Option<usize> {
    hay.windows(needle.len()).position(|w| w == needle)
}

fn parse_header(text: &str) -> Result<Header> {
    let mut lines = text.lines();
    let magic = lines.next().unwrap_or_default().trim();
    match magic {
        "NRRD0004" | "NRRD0005" => {}
        m if m.starts_with("NRRD000") => {
            return Err(Error::Unsupported {
                field: "version",
                value: m.to_string(),
            })
        }
        _ => return Err(Error::MalformedHeader("missing NRRD magic".into())),
    }
    let mut header = Header::default();
    for line in lines {
        let line = line.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some((k, v)) = line.split_once(":=") {
            header.keyvals.insert(k.to_string(), v.to_string());
        } else if let Some((k, v)) = line.split_once(": ") {
            header
                .fields
                .insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
        } else {
            return Err(Error::MalformedHeader(format!("unparseable line `{line}`")));
        }
    }
    Ok(header)
}

fn parse_vector(s: &str) -> Result<Vec3> {
    let inner = s
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| Error::MalformedHeader(format!("bad vector `{s}`")))?;
    let vals: Vec<f64> = inner
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::MalformedHeader(format!("bad vector `{s}`")))?;
    match vals[..] {
        [x, y, z] if vals.iter().all(|v| v.is_finite()) => Ok(Vec3::new(x, y, z)),
        _ => Err(Error::MalformedHeader(format!("expected a 3-vector, got `{s}`"))),
    }
}

fn parse_directions(s: &str) -> Result<Vec<Option<Vec3>>> {
    let mut out = Vec::new();
    let mut rest = s.trim();
    while !rest.is_empty() {
        if let Some(r) = rest.strip_prefix("none") {
            out.push(None);
            rest = r.trim_start();
        } else if rest.starts_with('(') {
            let close = rest
                .find(')')
                .ok_or_else(|| Error::MalformedHeader("unterminated space direction".into()))?;
            out.push(Some(parse_vector(&rest[..=close])?));
            rest = rest[close + 1..].trim_start();
        } else {
            return Err(Error::MalformedHeader(format!("bad space directions `{s}`")));
        }
    }
    Ok(out)
}

fn decode_samples(raw: &[u8], sample: SampleType, big_endian: bool) -> Result<Vec<u32>> {
    let n = sample.size();
    raw.chunks_exact(n)
        .map(|c| {
            let v = match (sample, big_endian) {
                (SampleType::U8, _) => c[0] as u32,
                (SampleType::U16, false) => u16::from_le_bytes([c[0], c[1]]) as u32,
                (SampleType::U16, true) => u16::from_be_bytes([c[0], c[1]]) as u32,
                (SampleType::I16, be) => {
                    let v = if be {
                        i16::from_be_bytes([c[0], c[1]])
                    } else {
                        i16::from_le_bytes([c[0], c[1]])
                    };
                    u32::try_from(v).map_err(|_| Error::Unsupported {
                        field: "label value",
                        value: v.to_string(),
                    })?
                }
                (SampleType::U32, false) => u32::from_le_bytes([c[0], c[1], c[2], c[3]]),
                (SampleType::U32, true) => u32::from_be_bytes([c[0], c[1], c[2], c[3]]),
            };
            Ok(v)
        })
        .collect()
}

fn parse_segments(header: &Header) -> Result<Vec<Segment>> {
    #[derive(Default)]
    struct Partial {
        name: Option<String>,
        value: Option<u32>,
        layer: Option<usize>,
    }
    let mut parts: BTreeMap<usize, Partial> = BTreeMap::new();
    for (key, val) in &header.keyvals {
        let Some(rest) = key.strip_prefix("Segment") else {
            continue;
        };
        let Some((idx, attr)) = rest.split_once('_') else {
            continue;
        };
        let Ok(idx) = idx.parse::<usize>() else {
            continue;
        };
        let p = parts.entry(idx).or_default();
        let bad = || Error::MalformedHeader(format!("bad value for `{key}`: `{val}`"));
        match attr {
            "Name" => p.name = Some(val.trim().to_string()),
            "LabelValue" => p.value = Some(val.trim().parse().map_err(|_| bad())?),
            "Layer" => p.layer = Some(val.trim().parse().map_err(|_| bad())?),
            _ => {}
        }
    }
    parts
        .into_iter()
        .filter(|(_, p)| p.name.is_some() || p.value.is_some())
        .map(|(index, p)| {
            let value = p.value.ok_or_else(|| {
                Error::MalformedHeader(format!("Segment{index}_LabelValue is missing"))
            })?;
            if value == BACKGROUND {
                return Err(Error::MalformedHeader(format!("Segment{index} uses label 0")));
            }
            Ok(Segment {
                index,
                name: p.name.unwrap_or_else(|| format!("label_{value}")),
                value,
                layer: p.layer.unwrap_or(0),
            })
        })
        .collect()
}

/// Collapses a layered segmentation into one label per voxel. On overlap the
/// lowest layer wins. When segment label values repeat across layers, segments
/// are renumbered 1..=n in segment order.
fn collapse_layers(
    geometry: VoxelGeometry,
    samples: &[u32],
    sizes: &[usize],
    list_axis: usize,
    segments: &[Segment],
    warnings: &mut Vec<String>,
) -> Result<LabelVolume> {
    let n_layers = sizes[list_axis];
    let mut strides = [0usize; 4];
    let mut acc = 1;
    for (a, stride) in strides.iter_mut().enumerate() {
        *stride = acc;
        acc *= sizes[a];
    }
    let spatial: Vec<usize> = (0..4).filter(|&a| a != list_axis).collect();
    let dims = geometry.dims();

    let distinct_values: BTreeSet<u32> = segments.iter().map(|s| s.value).collect();
    let renumber = distinct_values.len() != segments.len();
    if renumber {
        warnings.push(
            "segment label values repeat across layers; segments renumbered in segment order"
                .to_string(),
        );
    }
    let mut mapping: BTreeMap<(usize, u32), u32> = BTreeMap::new();
    let mut table = BTreeMap::new();
    for (n, seg) in segments.iter().enumerate() {
        let value = if renumber { n as u32 + 1 } else { seg.value };
        if mapping.insert((seg.layer, seg.value), value).is_some() {
            return Err(Error::MalformedHeader(format!(
                "Segment{} duplicates layer {} value {}",
                seg.index, seg.layer, seg.value
            )));
        }
        table.insert(value, seg.name.clone());
    }
    let mut next_free = table.keys().next_back().copied().unwrap_or(0) + 1;

    let mut labels = Vec::with_capacity(dims.iter().product());
    let mut overlaps = 0usize;
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let base = i * strides[spatial[0]] + j * strides[spatial[1]] + k * strides[spatial[2]];
                let mut chosen = BACKGROUND;
                for layer in 0..n_layers {
                    let raw = samples[base + layer * strides[list_axis]];
                    if raw == BACKGROUND {
                        continue;
                    }
                    if chosen != BACKGROUND {
                        overlaps += 1;
                        break;
                    }
                    chosen = match mapping.get(&(layer, raw)) {
                        Some(&v) => v,
                        None if n_layers == 1 && !table.contains_key(&raw) => {
                            mapping.insert((layer, raw), raw);
                            raw
                        }
                        None => {
                            let v = next_free;
                            next_free += 1;
                            mapping.insert((layer, raw), v);
                            v
                        }
                    };
                }
                labels.push(chosen);
            }
        }
    }
    if overlaps > 0 {
        warnings.push(format!(
            "{overlaps} voxels belong to more than one layer; lowest layer kept"
        ));
    }
    let labels = Grid3::from_vec(dims, labels).expect("dims from geometry");
    LabelVolume::new(geometry, labels, table)
}

/// Writes a 3D labelmap with the narrowest unsigned sample type that fits.
pub fn write_nrrd<W: Write>(volume: &LabelVolume, encoding: NrrdEncoding, mut out: W) -> Result<()> {
    let max = volume.labels().as_slice().iter().copied().max().unwrap_or(0);
    let sample = if max <= u8::MAX as u32 {
        SampleType::U8
    } else if max <= u16::MAX as u32 {
        SampleType::U16
    } else {
        SampleType::U32
    };
    let g = volume.geometry();
    let [nx, ny, nz] = g.dims();

    let mut h = String::from("NRRD0004\n");
    h += &format!("type: {}\n", sample.name());
    h += "dimension: 3\n";
    match volume.space() {
        Some(s) => h += &format!("space: {s}\n"),
        None => h += "space dimension: 3\n",
    }
    h += &format!("sizes: {nx} {ny} {nz}\n");
    let dirs: Vec<String> = g.space_directions().iter().map(fmt_vector).collect();
    h += &format!("space directions: {}\n", dirs.join(" "));
    h += "kinds: domain domain domain\n";
    h += "endian: little\n";
    h += match encoding {
        NrrdEncoding::Raw => "encoding: raw\n",
        NrrdEncoding::Gzip => "encoding: gzip\n",
    };
    h += &format!("space origin: {}\n", fmt_vector(&g.origin()));
    for (n, (value, name)) in volume.table().iter().enumerate() {
        h += &format!("Segment{n}_Name:={name}\n");
        h += &format!("Segment{n}_LabelValue:={value}\n");
        h += &format!("Segment{n}_Layer:=0\n");
    }
    h += "\n";
    out.write_all(h.as_bytes())?;

    let mut payload = Vec::with_capacity(volume.labels().len() * sample.size());
    for &v in volume.labels().as_slice() {
        match sample {
            SampleType::U8 => payload.push(v as u8),
            SampleType::U16 => payload.extend_from_slice(&(v as u16).to_le_bytes()),
            _ => payload.extend_from_slice(&v.to_le_bytes()),
        }
    }
    match encoding {
        NrrdEncoding::Raw => out.write_all(&payload)?,
        NrrdEncoding::Gzip => {
            let mut enc = GzEncoder::new(out, Compression::default());
            enc.write_all(&payload)?;
            enc.finish()?;
        }
    }
    Ok(())
}

fn fmt_vector(v: &Vec3) -> String {
    format!("({},{},{})", v[0], v[1], v[2])
}
