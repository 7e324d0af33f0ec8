//! Mesh file formats.
//!
//! Three read formats: Wavefront OBJ, PLY (ASCII and binary little-endian),
//! and OFF. One write format: ASCII OBJ with 17 significant digits, enough
//! for `f64` coordinates to round-trip bit-exactly through a save/load
//! cycle.
//!
//! Quads are split into two triangles by a fan at the first vertex.
//! Polygons with five or more vertices are rejected rather than fanned:
//! fanning a non-planar polygon silently changes the surface, and the mesh
//! sources this crate targets are triangulated or quad-dominant anyway.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;

/// Supported mesh file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    Ply,
    Off,
}

impl MeshFormat {
    /// Infers the format from a file extension, case-insensitively.
    pub fn from_path(path: &Path) -> Option<MeshFormat> {
        match path
            .extension()?
            .to_str()?
            .to_ascii_lowercase()
            .as_str()
        {
            "obj" => Some(MeshFormat::Obj),
            "ply" => Some(MeshFormat::Ply),
            "off" => Some(MeshFormat::Off),
            _ => None,
        }
    }
}

/// Loads a triangle mesh. With `format = None` the format is inferred from
/// the file extension.
pub fn load_mesh(path: impl AsRef<Path>, format: Option<MeshFormat>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let format = match format.or_else(|| MeshFormat::from_path(path)) {
        Some(f) => f,
        None => {
            return Err(Error::InvalidArgument(format!(
                "cannot infer mesh format of {} (expected .obj, .ply, or .off)",
                path.display()
            )))
        }
    };
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    match format {
        MeshFormat::Obj => parse_obj(path, &bytes),
        MeshFormat::Ply => parse_ply(path, &bytes),
        MeshFormat::Off => parse_off(path, &bytes),
    }
}

/// Writes an ASCII OBJ file with full-precision coordinates.
pub fn save_obj(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(mesh.n_vertices() * 64);
    for v in mesh.vertices() {
        writeln!(out, "v {:.16e} {:.16e} {:.16e}", v[0], v[1], v[2]).expect("write to vec");
    }
    for t in mesh.triangles() {
        writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).expect("write to vec");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Splits an n-gon into triangles; only n = 3 and n = 4 are accepted.
fn push_face(
    triangles: &mut Vec<[usize; 3]>,
    face: &[usize],
    path: &Path,
    line: usize,
) -> Result<()> {
    match face.len() {
        3 => triangles.push([face[0], face[1], face[2]]),
        4 => {
            triangles.push([face[0], face[1], face[2]]);
            triangles.push([face[0], face[2], face[3]]);
        }
        n => {
            return Err(Error::parse(
                path,
                line,
                format!("face with {n} vertices (only triangles and quads are supported)"),
            ))
        }
    }
    Ok(())
}

fn check_indices(
    face: &[usize],
    n_vertices: usize,
    path: &Path,
    line: usize,
) -> Result<()> {
    for &idx in face {
        if idx >= n_vertices {
            return Err(Error::parse(
                path,
                line,
                format!("vertex index {} out of range (mesh has {n_vertices} vertices)", idx + 1),
            ));
        }
    }
    Ok(())
}

fn as_text<'a>(path: &Path, bytes: &'a [u8]) -> Result<&'a str> {
    std::str::from_utf8(bytes)
        .map_err(|_| Error::parse(path, 0, "file is not valid UTF-8 text".to_string()))
}

fn parse_f64(tok: &str, path: &Path, line: usize) -> Result<f64> {
    tok.parse::<f64>()
        .map_err(|_| Error::parse(path, line, format!("invalid number {tok:?}")))
}

fn parse_usize(tok: &str, path: &Path, line: usize) -> Result<usize> {
    tok.parse::<usize>()
        .map_err(|_| Error::parse(path, line, format!("invalid count {tok:?}")))
}

// ---------------------------------------------------------------------------
// OBJ

fn parse_obj(path: &Path, bytes: &[u8]) -> Result<TriangleMesh> {
    let text = as_text(path, bytes)?;
    let mut vertices: Vec<Vector3<f64>> = Vec::new();
    let mut triangles: Vec<[usize; 3]> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut toks = line.split_whitespace();
        match toks.next().unwrap() {
            "v" => {
                let coords: Vec<&str> = toks.collect();
                if coords.len() < 3 {
                    return Err(Error::parse(path, lineno, "vertex needs 3 coordinates"));
                }
                let x = parse_f64(coords[0], path, lineno)?;
                let y = parse_f64(coords[1], path, lineno)?;
                let z = parse_f64(coords[2], path, lineno)?;
                vertices.push(Vector3::new(x, y, z));
            }
            "f" => {
                let mut face = Vec::with_capacity(4);
                for tok in toks {
                    // "3", "3/1", "3//2", "3/1/2": the vertex index leads.
                    let first = tok.split('/').next().unwrap();
                    let raw_idx: i64 = first.parse().map_err(|_| {
                        Error::parse(path, lineno, format!("invalid face index {tok:?}"))
                    })?;
                    let resolved = if raw_idx > 0 {
                        (raw_idx - 1) as usize
                    } else if raw_idx < 0 && vertices.len() as i64 + raw_idx >= 0 {
                        (vertices.len() as i64 + raw_idx) as usize
                    } else {
                        return Err(Error::parse(
                            path,
                            lineno,
                            format!("face index {raw_idx} out of range"),
                        ));
                    };
                    face.push(resolved);
                }
                if face.len() < 3 {
                    return Err(Error::parse(path, lineno, "face needs at least 3 vertices"));
                }
                check_indices(&face, vertices.len(), path, lineno)?;
                push_face(&mut triangles, &face, path, lineno)?;
            }
            // Normals, texture coordinates, groups, and materials carry no
            // geometry we use.
            _ => {}
        }
    }
    TriangleMesh::new(vertices, triangles)
}

// ---------------------------------------------------------------------------
// PLY

#[derive(Debug, Clone, Copy, PartialEq)]
enum PlyType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl PlyType {
    fn parse(tok: &str, path: &Path, line: usize) -> Result<PlyType> {
        Ok(match tok {
            "char" | "int8" => PlyType::I8,
            "uchar" | "uint8" => PlyType::U8,
            "short" | "int16" => PlyType::I16,
            "ushort" | "uint16" => PlyType::U16,
            "int" | "int32" => PlyType::I32,
            "uint" | "uint32" => PlyType::U32,
            "float" | "float32" => PlyType::F32,
            "double" | "float64" => PlyType::F64,
            other => {
                return Err(Error::parse(
                    path,
                    line,
                    format!("unsupported property type {other:?}"),
                ))
            }
        })
    }

    fn size(self) -> usize {
        match self {
            PlyType::I8 | PlyType::U8 => 1,
            PlyType::I16 | PlyType::U16 => 2,
            PlyType::I32 | PlyType::U32 => 4,
            PlyType::F32 => 4,
            PlyType::F64 => 8,
        }
    }

    fn read(self, bytes: &[u8]) -> f64 {
        match self {
            PlyType::I8 => bytes[0] as i8 as f64,
            PlyType::U8 => bytes[0] as f64,
            PlyType::I16 => i16::from_le_bytes([bytes[0], bytes[1]]) as f64,
            PlyType::U16 => u16::from_le_bytes([bytes[0], bytes[1]]) as f64,
            PlyType::I32 => i32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            PlyType::U32 => u32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            PlyType::F32 => f32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            PlyType::F64 => f64::from_le_bytes(bytes[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum PlyProperty {
    Scalar { ty: PlyType, name: String },
    List { count: PlyType, item: PlyType, name: String },
}

#[derive(Debug, Clone)]
struct PlyElement {
    name: String,
    count: usize,
    properties: Vec<PlyProperty>,
}

fn parse_ply(path: &Path, bytes: &[u8]) -> Result<TriangleMesh> {
    // The header is always ASCII, one declaration per line, regardless of
    // the body encoding.
    let header_end = find_header_end(bytes)
        .ok_or_else(|| Error::parse(path, 0, "missing end_header"))?;
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| Error::parse(path, 0, "header is not valid UTF-8"))?;

    let mut lines = header.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(Error::parse(path, 1, "not a PLY file (missing magic)")),
    }

    let mut binary = None;
    let mut elements: Vec<PlyElement> = Vec::new();
    for (i, raw) in lines {
        let lineno = i + 1;
        let line = raw.trim();
        let mut toks = line.split_whitespace();
        match toks.next() {
            None | Some("comment") | Some("obj_info") => {}
            Some("end_header") => break,
            Some("format") => match toks.next() {
                Some("ascii") => binary = Some(false),
                Some("binary_little_endian") => binary = Some(true),
                Some(other) => {
                    return Err(Error::parse(
                        path,
                        lineno,
                        format!("unsupported PLY format {other:?}"),
                    ))
                }
                None => return Err(Error::parse(path, lineno, "format line needs an encoding")),
            },
            Some("element") => {
                let name = toks
                    .next()
                    .ok_or_else(|| Error::parse(path, lineno, "element needs a name"))?;
                let count = parse_usize(
                    toks.next()
                        .ok_or_else(|| Error::parse(path, lineno, "element needs a count"))?,
                    path,
                    lineno,
                )?;
                elements.push(PlyElement {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements.last_mut().ok_or_else(|| {
                    Error::parse(path, lineno, "property before any element")
                })?;
                let kind = toks
                    .next()
                    .ok_or_else(|| Error::parse(path, lineno, "property needs a type"))?;
                if kind == "list" {
                    let count = PlyType::parse(
                        toks.next().ok_or_else(|| {
                            Error::parse(path, lineno, "list property needs a count type")
                        })?,
                        path,
                        lineno,
                    )?;
                    let item = PlyType::parse(
                        toks.next().ok_or_else(|| {
                            Error::parse(path, lineno, "list property needs an item type")
                        })?,
                        path,
                        lineno,
                    )?;
                    let name = toks
                        .next()
                        .ok_or_else(|| Error::parse(path, lineno, "property needs a name"))?;
                    element.properties.push(PlyProperty::List {
                        count,
                        item,
                        name: name.to_string(),
                    });
                } else {
                    let ty = PlyType::parse(kind, path, lineno)?;
                    let name = toks
                        .next()
                        .ok_or_else(|| Error::parse(path, lineno, "property needs a name"))?;
                    element.properties.push(PlyProperty::Scalar {
                        ty,
                        name: name.to_string(),
                    });
                }
            }
            Some(other) => {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("unexpected header keyword {other:?}"),
                ))
            }
        }
    }
    let binary =
        binary.ok_or_else(|| Error::parse(path, 0, "PLY header has no format line"))?;

    let body = &bytes[header_end..];
    if binary {
        parse_ply_binary(path, body, &elements)
    } else {
        parse_ply_ascii(path, body, &elements, header.lines().count())
    }
}

/// Byte offset of the first body byte, i.e. just past the `end_header`
/// line terminator.
fn find_header_end(bytes: &[u8]) -> Option<usize> {
    let needle = b"end_header";
    let mut i = 0;
    while i + needle.len() <= bytes.len() {
        if &bytes[i..i + needle.len()] == needle {
            let mut j = i + needle.len();
            while j < bytes.len() && bytes[j] != b'\n' {
                j += 1;
            }
            return Some((j + 1).min(bytes.len()));
        }
        i += 1;
    }
    None
}

fn vertex_xyz_slots(element: &PlyElement, path: &Path) -> Result<[usize; 3]> {
    let mut slots = [usize::MAX; 3];
    for (k, prop) in element.properties.iter().enumerate() {
        if let PlyProperty::Scalar { name, .. } = prop {
            match name.as_str() {
                "x" => slots[0] = k,
                "y" => slots[1] = k,
                "z" => slots[2] = k,
                _ => {}
            }
        }
    }
    if slots.contains(&usize::MAX) {
        return Err(Error::parse(
            path,
            0,
            "vertex element lacks x/y/z properties",
        ));
    }
    Ok(slots)
}

fn is_face_index_list(name: &str) -> bool {
    matches!(name, "vertex_indices" | "vertex_index")
}

fn parse_ply_ascii(
    path: &Path,
    body: &[u8],
    elements: &[PlyElement],
    header_lines: usize,
) -> Result<TriangleMesh> {
    let text = as_text(path, body)?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (header_lines + i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let mut vertices: Vec<Vector3<f64>> = Vec::new();
    let mut triangles: Vec<[usize; 3]> = Vec::new();

    for element in elements {
        let is_vertex = element.name == "vertex";
        let slots = if is_vertex {
            Some(vertex_xyz_slots(element, path)?)
        } else {
            None
        };
        for _ in 0..element.count {
            let (lineno, line) = lines.next().ok_or_else(|| {
                Error::parse(path, 0, format!("unexpected end of {} data", element.name))
            })?;
            let mut toks = line.split_whitespace();
            let mut scalars: Vec<f64> = Vec::with_capacity(element.properties.len());
            let mut face: Vec<usize> = Vec::new();
            for prop in &element.properties {
                match prop {
                    PlyProperty::Scalar { .. } => {
                        let tok = toks.next().ok_or_else(|| {
                            Error::parse(path, lineno, "missing property value")
                        })?;
                        scalars.push(parse_f64(tok, path, lineno)?);
                    }
                    PlyProperty::List { name, .. } => {
                        let count = parse_usize(
                            toks.next().ok_or_else(|| {
                                Error::parse(path, lineno, "missing list count")
                            })?,
                            path,
                            lineno,
                        )?;
                        let mut items = Vec::with_capacity(count);
                        for _ in 0..count {
                            let tok = toks.next().ok_or_else(|| {
                                Error::parse(path, lineno, "truncated list")
                            })?;
                            items.push(parse_usize(tok, path, lineno)?);
                        }
                        if element.name == "face" && is_face_index_list(name) {
                            face = items;
                        }
                    }
                }
            }
            if let Some(slots) = slots {
                vertices.push(Vector3::new(
                    scalars[slot_rank(element, slots[0])],
                    scalars[slot_rank(element, slots[1])],
                    scalars[slot_rank(element, slots[2])],
                ));
            }
            if element.name == "face" {
                check_indices(&face, vertices.len(), path, lineno)?;
                push_face(&mut triangles, &face, path, lineno)?;
            }
        }
    }
    TriangleMesh::new(vertices, triangles)
}

/// Position of property slot `prop_idx` among the scalar properties of the
/// element (lists do not land in the scalar buffer).
fn slot_rank(element: &PlyElement, prop_idx: usize) -> usize {
    element.properties[..prop_idx]
        .iter()
        .filter(|p| matches!(p, PlyProperty::Scalar { .. }))
        .count()
}

fn parse_ply_binary(path: &Path, body: &[u8], elements: &[PlyElement]) -> Result<TriangleMesh> {
    let mut vertices: Vec<Vector3<f64>> = Vec::new();
    let mut triangles: Vec<[usize; 3]> = Vec::new();
    let mut offset = 0usize;
    let need = |offset: usize, len: usize, ordinal: usize| -> Result<()> {
        if offset + len > body.len() {
            Err(Error::parse(
                path,
                ordinal,
                "unexpected end of binary data".to_string(),
            ))
        } else {
            Ok(())
        }
    };

    for element in elements {
        let is_vertex = element.name == "vertex";
        let slots = if is_vertex {
            Some(vertex_xyz_slots(element, path)?)
        } else {
            None
        };
        for ordinal in 0..element.count {
            let mut scalars: Vec<f64> = Vec::with_capacity(element.properties.len());
            let mut face: Vec<usize> = Vec::new();
            for prop in &element.properties {
                match prop {
                    PlyProperty::Scalar { ty, .. } => {
                        need(offset, ty.size(), ordinal + 1)?;
                        scalars.push(ty.read(&body[offset..]));
                        offset += ty.size();
                    }
                    PlyProperty::List { count, item, name } => {
                        need(offset, count.size(), ordinal + 1)?;
                        let raw = count.read(&body[offset..]);
                        offset += count.size();
                        if raw < 0.0 || raw.fract() != 0.0 {
                            return Err(Error::parse(
                                path,
                                ordinal + 1,
                                format!("invalid list count {raw}"),
                            ));
                        }
                        let n = raw as usize;
                        let mut items = Vec::with_capacity(n);
                        for _ in 0..n {
                            need(offset, item.size(), ordinal + 1)?;
                            let v = item.read(&body[offset..]);
                            offset += item.size();
                            if v < 0.0 || v.fract() != 0.0 {
                                return Err(Error::parse(
                                    path,
                                    ordinal + 1,
                                    format!("invalid vertex index {v}"),
                                ));
                            }
                            items.push(v as usize);
                        }
                        if element.name == "face" && is_face_index_list(name) {
                            face = items;
                        }
                    }
                }
            }
            if let Some(slots) = slots {
                vertices.push(Vector3::new(
                    scalars[slot_rank(element, slots[0])],
                    scalars[slot_rank(element, slots[1])],
                    scalars[slot_rank(element, slots[2])],
                ));
            }
            if element.name == "face" {
                check_indices(&face, vertices.len(), path, ordinal + 1)?;
                push_face(&mut triangles, &face, path, ordinal + 1)?;
            }
        }
    }
    TriangleMesh::new(vertices, triangles)
}

// ---------------------------------------------------------------------------
// OFF

fn parse_off(path: &Path, bytes: &[u8]) -> Result<TriangleMesh> {
    let text = as_text(path, bytes)?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| {
            // Strip trailing comments.
            let l = l.split('#').next().unwrap_or("").trim();
            (i + 1, l)
        })
        .filter(|(_, l)| !l.is_empty());

    let (first_no, first) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty OFF file"))?;
    let counts_line: (usize, String);
    if let Some(rest) = first.strip_prefix("OFF") {
        let rest = rest.trim();
        if rest.is_empty() {
            let (no, l) = lines
                .next()
                .ok_or_else(|| Error::parse(path, first_no, "missing count line"))?;
            counts_line = (no, l.to_string());
        } else {
            // "OFF nv nf ne" on one line.
            counts_line = (first_no, rest.to_string());
        }
    } else {
        // Headerless variant: first line is the count line.
        counts_line = (first_no, first.to_string());
    }
    let (counts_no, counts_str) = counts_line;
    let counts: Vec<&str> = counts_str.split_whitespace().collect();
    if counts.len() < 2 {
        return Err(Error::parse(
            path,
            counts_no,
            "count line needs vertex and face counts",
        ));
    }
    let nv = parse_usize(counts[0], path, counts_no)?;
    let nf = parse_usize(counts[1], path, counts_no)?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (lineno, line) = lines
            .next()
            .ok_or_else(|| Error::parse(path, 0, "unexpected end of vertex data"))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() < 3 {
            return Err(Error::parse(path, lineno, "vertex needs 3 coordinates"));
        }
        vertices.push(Vector3::new(
            parse_f64(toks[0], path, lineno)?,
            parse_f64(toks[1], path, lineno)?,
            parse_f64(toks[2], path, lineno)?,
        ));
    }

    let mut triangles = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (lineno, line) = lines
            .next()
            .ok_or_else(|| Error::parse(path, 0, "unexpected end of face data"))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        let count = parse_usize(toks[0], path, lineno)?;
        if toks.len() < count + 1 {
            return Err(Error::parse(path, lineno, "truncated face line"));
        }
        let mut face = Vec::with_capacity(count);
        for tok in &toks[1..=count] {
            face.push(parse_usize(tok, path, lineno)?);
        }
        check_indices(&face, vertices.len(), path, lineno)?;
        push_face(&mut triangles, &face, path, lineno)?;
    }
    TriangleMesh::new(vertices, triangles)
}
