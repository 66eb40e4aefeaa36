//! Binary little-endian PLY reading and writing for both primitive kinds.
//!
//! Gaussians use the 3DGS vertex layout: `x y z [nx ny nz] f_dc_0..2
//! [f_rest_0..] opacity scale_0..2 rot_0..3`, with opacity stored
//! pre-sigmoid and scale stored as a natural log. Neural points use
//! `x y z size opacity feat_0..feat_{D-1}` with opacity stored as-is.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{Quat, Vec3};
use crate::scalar::{logit, sigmoid, Real};
use crate::scene::{sh_coeff_count, Gaussian, GaussianSet, NeuralPoint, NeuralPointCloud};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    pub fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Self::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Self::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Property {
    pub name: String,
    pub ty: ScalarType,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Element {
    pub name: String,
    pub count: usize,
    pub properties: Vec<Property>,
}

impl Element {
    pub fn record_size(&self) -> usize {
        self.properties.iter().map(|p| p.ty.size()).sum()
    }

    fn offset_of(&self, name: &str) -> Option<(usize, ScalarType)> {
        let mut off = 0;
        for p in &self.properties {
            if p.name == name {
                return Some((off, p.ty));
            }
            off += p.ty.size();
        }
        None
    }

    fn require(&self, name: &str) -> Result<(usize, ScalarType)> {
        self.offset_of(name)
            .ok_or_else(|| Error::MissingField(name.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Header {
    pub elements: Vec<Element>,
}

impl Header {
    pub fn element(&self, name: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.name == name)
    }
}

/// Parses the ASCII header, leaving `reader` at the first data byte.
pub fn read_header<R: BufRead>(reader: &mut R) -> Result<Header> {
    let mut line = String::new();
    let mut next_line = |reader: &mut R| -> Result<String> {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Err(Error::Parse("unexpected end of header".into()));
        }
        Ok(line.trim_end_matches(['\n', '\r']).to_string())
    };
    if next_line(reader)? != "ply" {
        return Err(Error::Parse("missing `ply` magic".into()));
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut format_seen = false;
    loop {
        let l = next_line(reader)?;
        let mut tok = l.split_whitespace();
        match tok.next() {
            Some("format") => {
                let fmt = tok.next().unwrap_or_default();
                if fmt != "binary_little_endian" {
                    return Err(Error::Parse(format!("unsupported PLY format `{fmt}`")));
                }
                format_seen = true;
            }
            Some("comment") | Some("obj_info") | None => {}
            Some("element") => {
                let name = tok
                    .next()
                    .ok_or_else(|| Error::Parse("element without name".into()))?;
                let count = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| Error::Parse(format!("bad count for element `{name}`")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::Parse("property before element".into()))?;
                let ty = tok.next().unwrap_or_default();
                if ty == "list" {
                    return Err(Error::Parse(format!(
                        "list properties are not supported (element `{}`)",
                        el.name
                    )));
                }
                let ty = ScalarType::parse(ty)
                    .ok_or_else(|| Error::Parse(format!("unknown property type `{ty}`")))?;
                let name = tok
                    .next()
                    .ok_or_else(|| Error::Parse("property without name".into()))?;
                el.properties.push(Property {
                    name: name.to_string(),
                    ty,
                });
            }
            Some("end_header") => break,
            Some(other) => return Err(Error::Parse(format!("unexpected header line `{other}`"))),
        }
    }
    if !format_seen {
        return Err(Error::Parse("missing format line".into()));
    }
    Ok(Header { elements })
}

/// Skips to the `vertex` element and returns its raw records.
fn read_vertex_block<R: BufRead>(reader: &mut R, header: &Header) -> Result<(Element, Vec<u8>)> {
    for el in &header.elements {
        let size = el.record_size() * el.count;
        if el.name == "vertex" {
            let mut buf = vec![0u8; size];
            reader.read_exact(&mut buf).map_err(|e| {
                if e.kind() == std::io::ErrorKind::UnexpectedEof {
                    Error::Parse(format!("file truncated: expected {} vertices", el.count))
                } else {
                    Error::Io(e)
                }
            })?;
            return Ok((el.clone(), buf));
        }
        std::io::copy(&mut reader.by_ref().take(size as u64), &mut std::io::sink())?;
    }
    Err(Error::MissingField("element vertex".into()))
}

struct Field {
    offset: usize,
    ty: ScalarType,
}

impl Field {
    fn lookup(el: &Element, name: &str) -> Result<Self> {
        let (offset, ty) = el.require(name)?;
        Ok(Self { offset, ty })
    }

    #[inline]
    fn get(&self, record: &[u8]) -> f64 {
        self.ty.read(&record[self.offset..])
    }
}

fn fields(el: &Element, names: &[String]) -> Result<Vec<Field>> {
    names.iter().map(|n| Field::lookup(el, n)).collect()
}

fn numbered(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn count_numbered(el: &Element, prefix: &str) -> usize {
    el.properties
        .iter()
        .filter(|p| {
            p.name
                .strip_prefix(prefix)
                .is_some_and(|rest| rest.parse::<usize>().is_ok())
        })
        .count()
}

fn finite_or<T: Real>(v: f64, index: usize, what: &str) -> Result<T> {
    if v.is_finite() {
        Ok(T::lit(v))
    } else {
        Err(Error::Data {
            index,
            message: format!("non-finite {what}"),
        })
    }
}

pub fn load_gaussians<T: Real>(path: impl AsRef<Path>) -> Result<GaussianSet<T>> {
    read_gaussians(&mut BufReader::new(File::open(path)?))
}

pub fn read_gaussians<T: Real, R: BufRead>(reader: &mut R) -> Result<GaussianSet<T>> {
    let header = read_header(reader)?;
    let (el, data) = read_vertex_block(reader, &header)?;

    let pos = fields(&el, &["x".into(), "y".into(), "z".into()])?;
    let dc = fields(&el, &numbered("f_dc_", 3))?;
    let opacity = Field::lookup(&el, "opacity")?;
    let scale = fields(&el, &numbered("scale_", 3))?;
    let rot = fields(&el, &numbered("rot_", 4))?;
    let n_rest = count_numbered(&el, "f_rest_");
    let degree = match n_rest {
        0 => 0,
        9 => 1,
        24 => 2,
        45 => 3,
        n => {
            return Err(Error::Parse(format!(
                "{n} f_rest fields do not match any SH degree"
            )))
        }
    };
    let rest = fields(&el, &numbered("f_rest_", n_rest))?;
    let n_coeffs = sh_coeff_count(degree);
    let per_channel = n_coeffs - 1;

    let stride = el.record_size();
    let mut gaussians = Vec::with_capacity(el.count);
    for (index, rec) in data.chunks_exact(stride.max(1)).take(el.count).enumerate() {
        let v3 = |f: &[Field], what| -> Result<Vec3<T>> {
            Ok(Vec3([
                finite_or(f[0].get(rec), index, what)?,
                finite_or(f[1].get(rec), index, what)?,
                finite_or(f[2].get(rec), index, what)?,
            ]))
        };
        let position = v3(&pos, "position")?;
        let log_scale = v3(&scale, "scale")?;
        let mut q = [T::zero(); 4];
        for (qi, f) in q.iter_mut().zip(&rot) {
            *qi = finite_or(f.get(rec), index, "rotation")?;
        }
        let rotation = Quat(q).normalized().ok_or_else(|| Error::Data {
            index,
            message: "zero rotation quaternion".into(),
        })?;
        let raw_opacity: f64 = finite_or(opacity.get(rec), index, "opacity")?;
        let mut sh = vec![[T::zero(); 3]; n_coeffs];
        for c in 0..3 {
            sh[0][c] = finite_or(dc[c].get(rec), index, "f_dc")?;
            for k in 1..n_coeffs {
                sh[k][c] = finite_or(rest[c * per_channel + k - 1].get(rec), index, "f_rest")?;
            }
        }
        let g = Gaussian {
            position,
            log_scale,
            rotation,
            opacity: T::lit(sigmoid(raw_opacity)),
            sh,
        };
        if !g.scale().0.iter().all(|&s| s > T::zero() && s.is_finite()) {
            return Err(Error::Data {
                index,
                message: "scale out of range".into(),
            });
        }
        gaussians.push(g);
    }
    Ok(GaussianSet {
        sh_degree: degree,
        gaussians,
    })
}

pub fn load_points<T: Real>(path: impl AsRef<Path>) -> Result<NeuralPointCloud<T>> {
    read_points(&mut BufReader::new(File::open(path)?))
}

pub fn read_points<T: Real, R: BufRead>(reader: &mut R) -> Result<NeuralPointCloud<T>> {
    let header = read_header(reader)?;
    let (el, data) = read_vertex_block(reader, &header)?;
    let pos = fields(&el, &["x".into(), "y".into(), "z".into()])?;
    let size = Field::lookup(&el, "size")?;
    let opacity = Field::lookup(&el, "opacity")?;
    let dim = count_numbered(&el, "feat_");
    let feats = fields(&el, &numbered("feat_", dim))?;

    let stride = el.record_size();
    let mut points = Vec::with_capacity(el.count);
    for (index, rec) in data.chunks_exact(stride.max(1)).take(el.count).enumerate() {
        let position = Vec3([
            finite_or(pos[0].get(rec), index, "position")?,
            finite_or(pos[1].get(rec), index, "position")?,
            finite_or(pos[2].get(rec), index, "position")?,
        ]);
        let s: T = finite_or(size.get(rec), index, "size")?;
        if s <= T::zero() {
            return Err(Error::Data {
                index,
                message: format!("size must be positive, got {s}"),
            });
        }
        let o: T = finite_or(opacity.get(rec), index, "opacity")?;
        if !(o >= T::zero() && o <= T::one()) {
            return Err(Error::Data {
                index,
                message: format!("opacity {o} outside [0, 1]"),
            });
        }
        let features = feats
            .iter()
            .map(|f| finite_or(f.get(rec), index, "feature"))
            .collect::<Result<Vec<T>>>()?;
        points.push(NeuralPoint {
            position,
            size: s,
            features,
            opacity: o,
        });
    }
    Ok(NeuralPointCloud {
        feature_dim: dim,
        points,
    })
}

fn write_header<W: Write>(w: &mut W, count: usize, names: &[String]) -> Result<()> {
    writeln!(w, "ply")?;
    writeln!(w, "format binary_little_endian 1.0")?;
    writeln!(w, "element vertex {count}")?;
    for n in names {
        writeln!(w, "property float {n}")?;
    }
    writeln!(w, "end_header")?;
    Ok(())
}

/// Logit bound for opacities of exactly 0 or 1; sigmoid(±40) rounds to 0/1
/// in both f32 and f64.
const LOGIT_LIMIT: f64 = 40.0;

pub fn gaussian_property_names(sh_degree: usize) -> Vec<String> {
    let mut names: Vec<String> = ["x", "y", "z", "nx", "ny", "nz"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    names.extend(numbered("f_dc_", 3));
    names.extend(numbered("f_rest_", 3 * (sh_coeff_count(sh_degree) - 1)));
    names.push("opacity".into());
    names.extend(numbered("scale_", 3));
    names.extend(numbered("rot_", 4));
    names
}

pub fn save_gaussians<T: Real>(path: impl AsRef<Path>, set: &GaussianSet<T>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_gaussians(&mut w, set)?;
    w.flush()?;
    Ok(())
}

pub fn write_gaussians<T: Real, W: Write>(w: &mut W, set: &GaussianSet<T>) -> Result<()> {
    let names = gaussian_property_names(set.sh_degree);
    write_header(w, set.len(), &names)?;
    let n_coeffs = sh_coeff_count(set.sh_degree);
    let mut rec: Vec<f32> = Vec::with_capacity(names.len());
    for g in &set.gaussians {
        rec.clear();
        rec.extend(g.position.0.iter().map(|v| v.to_f32_lossy()));
        rec.extend([0.0f32; 3]);
        rec.extend(g.sh[0].iter().map(|v| v.to_f32_lossy()));
        for c in 0..3 {
            rec.extend(g.sh[1..n_coeffs].iter().map(|k| k[c].to_f32_lossy()));
        }
        let op = logit(g.opacity.to_f64_lossy()).clamp(-LOGIT_LIMIT, LOGIT_LIMIT);
        rec.push(op as f32);
        rec.extend(g.log_scale.0.iter().map(|v| v.to_f32_lossy()));
        rec.extend(g.rotation.0.iter().map(|v| v.to_f32_lossy()));
        for v in &rec {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn save_points<T: Real>(path: impl AsRef<Path>, cloud: &NeuralPointCloud<T>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_points(&mut w, cloud)?;
    w.flush()?;
    Ok(())
}

pub fn write_points<T: Real, W: Write>(w: &mut W, cloud: &NeuralPointCloud<T>) -> Result<()> {
    let mut names: Vec<String> = ["x", "y", "z", "size", "opacity"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    names.extend(numbered("feat_", cloud.feature_dim));
    write_header(w, cloud.len(), &names)?;
    for p in &cloud.points {
        let vals = p
            .position
            .0
            .iter()
            .chain([&p.size, &p.opacity])
            .chain(&p.features);
        for v in vals {
            w.write_all(&v.to_f32_lossy().to_le_bytes())?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn ply_bytes(names: &[&str], records: &[Vec<f32>]) -> Vec<u8> {
        let mut out = Vec::new();
        let names: Vec<String> = names.iter().map(|s| s.to_string()).collect();
        write_header(&mut out, records.len(), &names).unwrap();
        for r in records {
            for v in r {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    const G_FIELDS: [&str; 14] = [
        "x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1", "scale_2",
        "rot_0", "rot_1", "rot_2", "rot_3",
    ];

    #[test]
    fn raw_zero_opacity_loads_as_half() {
        let rec = vec![0.0, 0.0, 1.0, 0.1, 0.2, 0.3, 0.0, -2.0, -2.0, -2.0, 2.0, 0.0, 0.0, 0.0];
        let bytes = ply_bytes(&G_FIELDS, &[rec]);
        let set: GaussianSet<f32> = read_gaussians(&mut Cursor::new(bytes)).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.sh_degree, 0);
        let g = &set.gaussians[0];
        assert_eq!(g.opacity, 0.5);
        assert_eq!(g.rotation.0, [1.0, 0.0, 0.0, 0.0]);
        set.validate().unwrap();
    }

    #[test]
    fn missing_field_is_named() {
        let names: Vec<&str> = G_FIELDS.iter().copied().filter(|n| *n != "rot_2").collect();
        let bytes = ply_bytes(&names, &[vec![0.0; 13]]);
        let err = read_gaussians::<f32, _>(&mut Cursor::new(bytes)).unwrap_err();
        assert!(matches!(err, Error::MissingField(ref f) if f == "rot_2"), "{err}");
    }

    #[test]
    fn non_finite_reports_record() {
        let ok = vec![0.0, 0.0, 1.0, 0.1, 0.2, 0.3, 0.0, -2.0, -2.0, -2.0, 1.0, 0.0, 0.0, 0.0];
        let mut bad = ok.clone();
        bad[1] = f32::NAN;
        let bytes = ply_bytes(&G_FIELDS, &[ok.clone(), ok, bad]);
        let err = read_gaussians::<f32, _>(&mut Cursor::new(bytes)).unwrap_err();
        assert!(matches!(err, Error::Data { index: 2, .. }), "{err}");
    }

    #[test]
    fn truncated_body_is_parse_error() {
        let rec = vec![0.0; 14];
        let mut bytes = ply_bytes(&G_FIELDS, &[rec.clone(), rec]);
        bytes.truncate(bytes.len() - 5);
        assert!(matches!(
            read_gaussians::<f32, _>(&mut Cursor::new(bytes)),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn ascii_format_rejected() {
        let bytes = b"ply\nformat ascii 1.0\nelement vertex 0\nend_header\n".to_vec();
        assert!(matches!(
            read_gaussians::<f32, _>(&mut Cursor::new(bytes)),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn sh_rest_layout_is_channel_major() {
        let mut names: Vec<String> = G_FIELDS.iter().map(|s| s.to_string()).collect();
        names.extend(numbered("f_rest_", 9));
        let mut rec = vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        rec.extend((0..9).map(|i| i as f32));
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let bytes = ply_bytes(&refs, &[rec]);
        let set: GaussianSet<f64> = read_gaussians(&mut Cursor::new(bytes)).unwrap();
        assert_eq!(set.sh_degree, 1);
        let sh = &set.gaussians[0].sh;
        // coefficient k, channel c lives at f_rest_{c*3 + k-1}
        assert_eq!(sh[1], [0.0, 3.0, 6.0]);
        assert_eq!(sh[3], [2.0, 5.0, 8.0]);
    }

    #[test]
    fn point_values_round_trip_exactly() {
        let names = ["x", "y", "z", "size", "opacity", "feat_0", "feat_1", "feat_2", "feat_3"];
        let bytes = ply_bytes(&names, &[vec![1.0, 2.0, 3.0, 0.1, 0.7, 1.0, 0.0, 0.0, 0.0]]);
        let cloud: NeuralPointCloud<f32> = read_points(&mut Cursor::new(bytes)).unwrap();
        assert_eq!(cloud.feature_dim, 4);
        let p = &cloud.points[0];
        assert_eq!(p.position.0, [1.0, 2.0, 3.0]);
        assert_eq!(p.size, 0.1);
        assert_eq!(p.opacity, 0.7);
        assert_eq!(p.features, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn non_positive_size_rejected_at_record() {
        let names = ["x", "y", "z", "size", "opacity", "feat_0"];
        let bytes = ply_bytes(
            &names,
            &[vec![0.0, 0.0, 0.0, 0.1, 1.0, 0.0], vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0]],
        );
        let err = read_points::<f32, _>(&mut Cursor::new(bytes)).unwrap_err();
        assert!(matches!(err, Error::Data { index: 1, .. }), "{err}");
    }

    #[test]
    fn extra_elements_before_vertex_are_skipped() {
        let mut out = Vec::new();
        writeln!(out, "ply\nformat binary_little_endian 1.0\ncomment hi").unwrap();
        writeln!(out, "element meta 2\nproperty uchar flag").unwrap();
        writeln!(out, "element vertex 1").unwrap();
        for n in ["x", "y", "z", "size", "opacity"] {
            writeln!(out, "property float {n}").unwrap();
        }
        writeln!(out, "end_header").unwrap();
        out.extend([7u8, 9u8]);
        for v in [0.5f32, 0.0, 2.0, 0.3, 1.0] {
            out.extend(v.to_le_bytes());
        }
        let cloud: NeuralPointCloud<f32> = read_points(&mut Cursor::new(out)).unwrap();
        assert_eq!(cloud.points[0].position.0, [0.5, 0.0, 2.0]);
        assert_eq!(cloud.feature_dim, 0);
    }
}
