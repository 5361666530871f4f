//! Reading and writing point clouds as PLY.
//!
//! The reader accepts ASCII and binary little-endian files with any number
//! of elements; only the `vertex` element's `x`, `y` and `z` properties are
//! kept. Float coordinates are rounded half away from zero onto the voxel
//! grid. The writer emits `float` coordinates in canonical point order and
//! records the bit depth in a `comment voxel_depth=<d>` header line.

use std::fmt::Write as _;

use crate::cloud::{minimal_depth, Point, PointCloud};
use crate::error::{Error, Result};

const DEPTH_COMMENT: &str = "voxel_depth=";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarType {
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
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => ScalarType::I8,
            "uchar" | "uint8" => ScalarType::U8,
            "short" | "int16" => ScalarType::I16,
            "ushort" | "uint16" => ScalarType::U16,
            "int" | "int32" => ScalarType::I32,
            "uint" | "uint32" => ScalarType::U32,
            "float" | "float32" => ScalarType::F32,
            "double" | "float64" => ScalarType::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            ScalarType::I8 | ScalarType::U8 => 1,
            ScalarType::I16 | ScalarType::U16 => 2,
            ScalarType::I32 | ScalarType::U32 | ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            ScalarType::I8 => f64::from(b[0] as i8),
            ScalarType::U8 => f64::from(b[0]),
            ScalarType::I16 => f64::from(i16::from_le_bytes([b[0], b[1]])),
            ScalarType::U16 => f64::from(u16::from_le_bytes([b[0], b[1]])),
            ScalarType::I32 => f64::from(i32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            ScalarType::U32 => f64::from(u32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            ScalarType::F32 => f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            ScalarType::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar(ScalarType, String),
    List(ScalarType, ScalarType),
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Header {
    format: PlyFormat,
    elements: Vec<Element>,
    depth: Option<u32>,
    body_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut offset = 0;
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut depth = None;
    let mut first = true;

    loop {
        let line_start = offset;
        let rest = &bytes[offset..];
        let Some(nl) = rest.iter().position(|&b| b == b'\n') else {
            return Err(Error::parse(line_start, "header not terminated by end_header"));
        };
        offset += nl + 1;
        let line = std::str::from_utf8(&rest[..nl])
            .map_err(|_| Error::parse(line_start, "header is not valid UTF-8"))?
            .trim_end_matches('\r');
        let mut words = line.split_whitespace();
        let keyword = words.next().unwrap_or("");

        if first {
            if line != "ply" {
                return Err(Error::parse(line_start, "missing 'ply' magic line"));
            }
            first = false;
            continue;
        }

        match keyword {
            "format" => {
                let kind = words.next().unwrap_or("");
                let version = words.next().unwrap_or("");
                if version != "1.0" {
                    return Err(Error::parse(line_start, format!("unsupported version '{version}'")));
                }
                format = Some(match kind {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    other => {
                        return Err(Error::parse(line_start, format!("unsupported format '{other}'")))
                    }
                });
            }
            "comment" => {
                for word in words {
                    if let Some(value) = word.strip_prefix(DEPTH_COMMENT) {
                        let d = value.parse::<u32>().map_err(|_| {
                            Error::parse(line_start, format!("bad depth comment '{word}'"))
                        })?;
                        depth = Some(d);
                    }
                }
            }
            "obj_info" | "" => {}
            "element" => {
                let name = words
                    .next()
                    .ok_or_else(|| Error::parse(line_start, "element without name"))?;
                let count = words
                    .next()
                    .and_then(|c| c.parse::<usize>().ok())
                    .ok_or_else(|| Error::parse(line_start, "element without valid count"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            "property" => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(line_start, "property before any element"))?;
                let ty = words.next().unwrap_or("");
                let property = if ty == "list" {
                    let count_ty = words.next().and_then(ScalarType::parse);
                    let item_ty = words.next().and_then(ScalarType::parse);
                    let name = words.next();
                    match (count_ty, item_ty, name) {
                        (Some(c), Some(i), Some(_)) => Property::List(c, i),
                        _ => return Err(Error::parse(line_start, "malformed list property")),
                    }
                } else {
                    let scalar = ScalarType::parse(ty)
                        .ok_or_else(|| Error::parse(line_start, format!("unknown type '{ty}'")))?;
                    let name = words
                        .next()
                        .ok_or_else(|| Error::parse(line_start, "property without name"))?;
                    Property::Scalar(scalar, name.to_string())
                };
                element.properties.push(property);
            }
            "end_header" => break,
            other => {
                return Err(Error::parse(line_start, format!("unknown header keyword '{other}'")))
            }
        }
    }

    let format = format.ok_or_else(|| Error::parse(0, "missing format line"))?;
    Ok(Header {
        format,
        elements,
        depth,
        body_offset: offset,
    })
}

/// Positions of x, y and z within the vertex element's property list.
fn xyz_slots(element: &Element) -> Result<[usize; 3]> {
    let find = |axis: &str| {
        element
            .properties
            .iter()
            .position(|p| matches!(p, Property::Scalar(_, n) if n == axis))
            .ok_or_else(|| Error::Schema(format!("vertex element has no scalar '{axis}' property")))
    };
    Ok([find("x")?, find("y")?, find("z")?])
}

fn to_voxel(value: f64, offset: usize) -> Result<u32> {
    if !value.is_finite() {
        return Err(Error::Domain(format!("non-finite coordinate near byte {offset}")));
    }
    let rounded = value.round();
    if rounded < 0.0 {
        return Err(Error::Domain(format!(
            "negative coordinate {value} near byte {offset}"
        )));
    }
    if rounded > f64::from(u32::MAX) {
        return Err(Error::Domain(format!(
            "coordinate {value} near byte {offset} exceeds the voxel grid"
        )));
    }
    Ok(rounded as u32)
}

struct AsciiCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> AsciiCursor<'a> {
    fn next_token(&mut self) -> Result<(&'a str, usize)> {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::parse(start, "unexpected end of ASCII body"));
        }
        let token = std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::parse(start, "non-UTF-8 token"))?;
        Ok((token, start))
    }

    fn next_number(&mut self) -> Result<(f64, usize)> {
        let (token, at) = self.next_token()?;
        token
            .parse::<f64>()
            .map(|v| (v, at))
            .map_err(|_| Error::parse(at, format!("invalid number '{token}'")))
    }
}

fn read_ascii_body(bytes: &[u8], header: &Header) -> Result<Vec<Point>> {
    let mut cursor = AsciiCursor {
        bytes,
        pos: header.body_offset,
    };
    let mut points = Vec::new();
    for element in &header.elements {
        let slots = if element.name == "vertex" {
            Some(xyz_slots(element)?)
        } else {
            None
        };
        for _ in 0..element.count {
            let mut xyz = [0u32; 3];
            for (index, property) in element.properties.iter().enumerate() {
                match property {
                    Property::Scalar(..) => {
                        let (value, at) = cursor.next_number()?;
                        if let Some(slots) = slots {
                            if let Some(axis) = slots.iter().position(|&s| s == index) {
                                xyz[axis] = to_voxel(value, at)?;
                            }
                        }
                    }
                    Property::List(..) => {
                        let (count, at) = cursor.next_number()?;
                        if count < 0.0 || count.fract() != 0.0 {
                            return Err(Error::parse(at, "invalid list length"));
                        }
                        for _ in 0..count as usize {
                            cursor.next_number()?;
                        }
                    }
                }
            }
            if slots.is_some() {
                points.push(xyz);
            }
        }
    }
    Ok(points)
}

fn read_binary_body(bytes: &[u8], header: &Header) -> Result<Vec<Point>> {
    let mut pos = header.body_offset;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > bytes.len() {
            return Err(Error::parse(*pos, "unexpected end of binary body"));
        }
        let slice = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(slice)
    };
    let mut points = Vec::new();
    for element in &header.elements {
        let slots = if element.name == "vertex" {
            Some(xyz_slots(element)?)
        } else {
            None
        };
        for _ in 0..element.count {
            let mut xyz = [0u32; 3];
            for (index, property) in element.properties.iter().enumerate() {
                match property {
                    Property::Scalar(ty, _) => {
                        let at = pos;
                        let value = ty.read_le(take(&mut pos, ty.size())?);
                        if let Some(slots) = slots {
                            if let Some(axis) = slots.iter().position(|&s| s == index) {
                                xyz[axis] = to_voxel(value, at)?;
                            }
                        }
                    }
                    Property::List(count_ty, item_ty) => {
                        let at = pos;
                        let count = count_ty.read_le(take(&mut pos, count_ty.size())?);
                        if count < 0.0 {
                            return Err(Error::parse(at, "negative list length"));
                        }
                        take(&mut pos, count as usize * item_ty.size())?;
                    }
                }
            }
            if slots.is_some() {
                points.push(xyz);
            }
        }
    }
    Ok(points)
}

/// Parses a PLY file, inferring the bit depth from the header comment or,
/// failing that, from the largest coordinate.
pub fn read_ply(bytes: &[u8]) -> Result<PointCloud> {
    read_ply_with_depth(bytes, None)
}

/// Like [`read_ply`], with an explicit depth taking precedence over both the
/// header comment and inference.
pub fn read_ply_with_depth(bytes: &[u8], depth: Option<u32>) -> Result<PointCloud> {
    let header = parse_header(bytes)?;
    if !header.elements.iter().any(|e| e.name == "vertex") {
        return Err(Error::Schema("no vertex element".into()));
    }
    let points = match header.format {
        PlyFormat::Ascii => read_ascii_body(bytes, &header)?,
        PlyFormat::BinaryLittleEndian => read_binary_body(bytes, &header)?,
    };
    let depth = depth
        .or(header.depth)
        .unwrap_or_else(|| minimal_depth(&points));
    PointCloud::new(points, depth)
}

/// Serializes a cloud; `read_ply(&write_ply(pc, f)) == *pc` for both formats.
pub fn write_ply(pc: &PointCloud, format: PlyFormat) -> Vec<u8> {
    let mut header = String::new();
    header.push_str("ply\n");
    header.push_str(match format {
        PlyFormat::Ascii => "format ascii 1.0\n",
        PlyFormat::BinaryLittleEndian => "format binary_little_endian 1.0\n",
    });
    let _ = writeln!(header, "comment {DEPTH_COMMENT}{}", pc.depth());
    let _ = writeln!(header, "element vertex {}", pc.len());
    header.push_str("property float x\nproperty float y\nproperty float z\nend_header\n");

    let mut out = header.into_bytes();
    match format {
        PlyFormat::Ascii => {
            let mut body = String::with_capacity(pc.len() * 12);
            for [x, y, z] in pc.points() {
                let _ = writeln!(body, "{x} {y} {z}");
            }
            out.extend_from_slice(body.as_bytes());
        }
        PlyFormat::BinaryLittleEndian => {
            out.reserve(pc.len() * 12);
            for p in pc.points() {
                for &c in p {
                    out.extend_from_slice(&(c as f32).to_le_bytes());
                }
            }
        }
    }
    out
}
