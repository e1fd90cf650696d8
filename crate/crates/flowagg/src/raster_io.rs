//! PNG rasters: 8-bit grayscale for activation and saliency maps and binary
//! masks, indexed (or grayscale) 8-bit for label maps.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use flowagg_core::{ActivationMap, ClassId, ClassMask, LabelMap, UnitRaster};

use crate::error::{FormatError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasterKind {
    Activation,
    Saliency,
    Label,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Raster {
    /// Activation or saliency values in `[0, 1]`.
    Unit(UnitRaster),
    Label(LabelMap),
}

impl Raster {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            Raster::Unit(r) => r.dims(),
            Raster::Label(l) => l.dims(),
        }
    }
}

/// PASCAL VOC color map: bits of the index are spread over the high bits
/// of the three channels. Index 255 comes out as (224, 224, 192).
pub fn voc_palette() -> [[u8; 3]; 256] {
    let mut palette = [[0u8; 3]; 256];
    for (i, entry) in palette.iter_mut().enumerate() {
        let mut c = i;
        let mut rgb = [0u8; 3];
        for shift in (0..8).rev() {
            for (ch, v) in rgb.iter_mut().enumerate() {
                *v |= (((c >> ch) & 1) as u8) << shift;
            }
            c >>= 3;
        }
        *entry = rgb;
    }
    palette
}

struct Decoded {
    width: usize,
    height: usize,
    color: png::ColorType,
    depth: png::BitDepth,
    pixels: Vec<u8>,
}

fn decode(path: &Path) -> Result<Decoded> {
    let file = File::open(path).map_err(|e| FormatError::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let png_err = |source| FormatError::Png {
        path: path.to_owned(),
        source,
    };
    let mut reader = decoder.read_info().map_err(png_err)?;
    let mut pixels = vec![0; reader.output_buffer_size()];
    let frame = reader.next_frame(&mut pixels).map_err(png_err)?;
    pixels.truncate(frame.buffer_size());
    Ok(Decoded {
        width: frame.width as usize,
        height: frame.height as usize,
        color: frame.color_type,
        depth: frame.bit_depth,
        pixels,
    })
}

fn encode(
    path: &Path,
    width: usize,
    height: usize,
    color: png::ColorType,
    palette: Option<Vec<u8>>,
    pixels: &[u8],
) -> Result<()> {
    let file = File::create(path).map_err(|e| FormatError::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(color);
    encoder.set_depth(png::BitDepth::Eight);
    if let Some(p) = palette {
        encoder.set_palette(p);
    }
    let enc_err = |source| FormatError::PngEncode {
        path: path.to_owned(),
        source,
    };
    let mut writer = encoder.write_header().map_err(enc_err)?;
    writer.write_image_data(pixels).map_err(enc_err)?;
    writer.finish().map_err(enc_err)
}

fn check_expected(path: &Path, expected: Option<(usize, usize)>, got: (usize, usize)) -> Result<()> {
    match expected {
        Some(e) if e != got => Err(FormatError::DimensionMismatch {
            path: path.to_owned(),
            expected: e,
            got,
        }),
        _ => Ok(()),
    }
}

pub fn read_raster(
    path: impl AsRef<Path>,
    kind: RasterKind,
    expected: Option<(usize, usize)>,
) -> Result<Raster> {
    let path = path.as_ref();
    let img = decode(path)?;
    check_expected(path, expected, (img.width, img.height))?;
    let unsupported = |detail: &str| FormatError::UnsupportedFormat {
        path: path.to_owned(),
        detail: format!("{detail}, got {:?} {:?}", img.color, img.depth),
    };
    if img.depth != png::BitDepth::Eight {
        return Err(unsupported("need 8-bit samples"));
    }
    match kind {
        RasterKind::Activation | RasterKind::Saliency => {
            if img.color != png::ColorType::Grayscale {
                return Err(unsupported("need single-channel grayscale"));
            }
            let values = img.pixels.iter().map(|&p| f32::from(p) / 255.0).collect();
            UnitRaster::new(img.width, img.height, values)
                .map(Raster::Unit)
                .map_err(|e| FormatError::invalid(path, e))
        }
        RasterKind::Label => {
            if !matches!(img.color, png::ColorType::Indexed | png::ColorType::Grayscale) {
                return Err(unsupported("need indexed or grayscale labels"));
            }
            LabelMap::new(img.width, img.height, img.pixels)
                .map(Raster::Label)
                .map_err(|e| FormatError::invalid(path, e))
        }
    }
}

/// Unit rasters are quantized to the nearest 1/255; label maps are written
/// losslessly with the VOC palette.
pub fn write_raster(path: impl AsRef<Path>, raster: &Raster) -> Result<()> {
    let path = path.as_ref();
    match raster {
        Raster::Unit(r) => {
            let pixels: Vec<u8> = r.values().iter().map(|&v| quantize(v)).collect();
            encode(path, r.width(), r.height(), png::ColorType::Grayscale, None, &pixels)
        }
        Raster::Label(l) => {
            let palette = voc_palette().iter().flatten().copied().collect();
            encode(path, l.width(), l.height(), png::ColorType::Indexed, Some(palette), l.labels())
        }
    }
}

fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn read_unit(path: impl AsRef<Path>, kind: RasterKind, expected: Option<(usize, usize)>) -> Result<UnitRaster> {
    let path = path.as_ref();
    match read_raster(path, kind, expected)? {
        Raster::Unit(r) => Ok(r),
        Raster::Label(_) => Err(FormatError::invalid(path, "expected an activation or saliency raster")),
    }
}

pub fn read_labels(path: impl AsRef<Path>, expected: Option<(usize, usize)>) -> Result<LabelMap> {
    let path = path.as_ref();
    match read_raster(path, RasterKind::Label, expected)? {
        Raster::Label(l) => Ok(l),
        Raster::Unit(_) => unreachable!("label reads yield label rasters"),
    }
}

pub fn write_labels(path: impl AsRef<Path>, labels: &LabelMap) -> Result<()> {
    write_raster(path, &Raster::Label(labels.clone()))
}

pub fn read_activation(
    path: impl AsRef<Path>,
    class_id: ClassId,
    expected: Option<(usize, usize)>,
) -> Result<ActivationMap> {
    let path = path.as_ref();
    let r = read_unit(path, RasterKind::Activation, expected)?;
    let (w, h) = r.dims();
    ActivationMap::new(class_id, w, h, r.into_values()).map_err(|e| FormatError::invalid(path, e))
}

pub fn write_activation(path: impl AsRef<Path>, map: &ActivationMap) -> Result<()> {
    let r = UnitRaster::new(map.width(), map.height(), map.values().to_vec())
        .expect("activation maps hold unit values");
    write_raster(path, &Raster::Unit(r))
}

/// Binary masks are stored as grayscale 0 / 255.
pub fn write_mask(path: impl AsRef<Path>, mask: &ClassMask) -> Result<()> {
    let pixels: Vec<u8> = mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
    encode(path.as_ref(), mask.width(), mask.height(), png::ColorType::Grayscale, None, &pixels)
}

/// Pixels at or above mid-gray are set.
pub fn read_mask(path: impl AsRef<Path>, class_id: ClassId, expected: Option<(usize, usize)>) -> Result<ClassMask> {
    let path = path.as_ref();
    let r = read_unit(path, RasterKind::Activation, expected)?;
    let bits = r.values().iter().map(|&v| v >= 0.5).collect();
    ClassMask::new(class_id, r.width(), r.height(), bits).map_err(|e| FormatError::invalid(path, e))
}
