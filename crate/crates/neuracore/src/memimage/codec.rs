//! Hex file codec for memory images.
//!
//! One row per line, fixed-width lowercase hex, most-significant field
//! first. An event-to-address row packs `[count | addr]`; an assignment row
//! packs, for each engine from highest index down to 0,
//! `[select | capacitor | weight_addr]`. Weight words are one two's-
//! complement byte per line. Each file opens with a `# fields=...`
//! descriptor line, and `image_manifest.json` alongside the hex files
//! carries the full layout (widths and depths) needed to decode.

use std::fs;
use std::path::Path;

use super::{BitLayout, ImageError, MemE2aRow, MemImage, MemSnRow, SnSlot};

/// Most-significant-bit-first bit string with hex conversion. Rows can be
/// wider than any machine word, so bits are kept explicitly.
struct BitString {
    bits: Vec<bool>,
}

impl BitString {
    fn new() -> Self {
        BitString { bits: Vec::new() }
    }

    fn push(&mut self, field: &'static str, value: u64, width: u32) -> Result<(), ImageError> {
        if width < 64 && value >> width != 0 {
            return Err(ImageError::FieldOverflow { field, value, bits: width });
        }
        for bit in (0..width).rev() {
            self.bits.push(value >> bit & 1 == 1);
        }
        Ok(())
    }

    fn to_hex(&self) -> String {
        let digits = self.bits.len().div_ceil(4);
        let pad = digits * 4 - self.bits.len();
        let mut out = String::with_capacity(digits);
        let mut nibble = 0u8;
        let mut filled = pad;
        for &bit in &self.bits {
            nibble = nibble << 1 | bit as u8;
            filled += 1;
            if filled == 4 {
                out.push(char::from_digit(nibble as u32, 16).unwrap());
                nibble = 0;
                filled = 0;
            }
        }
        out
    }

    /// Parse a fixed-width hex line back into `bit_len` bits, requiring the
    /// pad bits (and overall digit count) to be exact.
    fn from_hex(text: &str, bit_len: usize) -> Result<BitString, String> {
        let digits = bit_len.div_ceil(4);
        if text.len() != digits {
            return Err(format!("expected {digits} hex digits, got {}", text.len()));
        }
        let mut bits = Vec::with_capacity(digits * 4);
        for ch in text.chars() {
            let value = ch
                .to_digit(16)
                .ok_or_else(|| format!("invalid hex digit {ch:?}"))?;
            if ch.is_ascii_uppercase() {
                return Err(format!("uppercase hex digit {ch:?}"));
            }
            for bit in (0..4).rev() {
                bits.push(value >> bit & 1 == 1);
            }
        }
        let pad = digits * 4 - bit_len;
        if bits[..pad].iter().any(|&b| b) {
            return Err("nonzero padding bits".into());
        }
        Ok(BitString { bits: bits.split_off(pad) })
    }

    fn read(&self, offset: usize, width: u32) -> u64 {
        let mut value = 0u64;
        for i in 0..width as usize {
            value = value << 1 | self.bits[offset + i] as u64;
        }
        value
    }
}

fn encode_e2a_row(row: &MemE2aRow, layout: &BitLayout) -> Result<String, ImageError> {
    let mut bits = BitString::new();
    bits.push("row count", row.row_count as u64, layout.e2a_count_bits)?;
    bits.push("start address", row.start_addr as u64, layout.e2a_addr_bits)?;
    Ok(bits.to_hex())
}

fn encode_sn_row(row: &MemSnRow, layout: &BitLayout) -> Result<String, ImageError> {
    let mut bits = BitString::new();
    for slot in row.slots.iter().rev() {
        bits.push("engine select", slot.enabled as u64, 1)?;
        bits.push("capacitor index", slot.vn as u64, layout.vn_bits)?;
        bits.push("weight address", slot.waddr as u64, layout.w_addr_bits)?;
    }
    Ok(bits.to_hex())
}

fn e2a_header(layout: &BitLayout) -> String {
    format!("# fields=e2a b:{} a:{}", layout.e2a_count_bits, layout.e2a_addr_bits)
}

fn sn_header(layout: &BitLayout) -> String {
    format!(
        "# fields=sn m:{} n:{} vn:{} w:{}",
        layout.engines, layout.capacitors, layout.vn_bits, layout.w_addr_bits
    )
}

fn wmem_header(engine: usize) -> String {
    format!("# fields=wmem engine:{engine} width:8")
}

fn write_file(path: &Path, contents: String) -> Result<(), ImageError> {
    fs::write(path, contents).map_err(|source| ImageError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Write the hex files and layout manifest for one image into `dir`.
pub fn encode_to_dir(image: &MemImage, dir: &Path) -> Result<(), ImageError> {
    let layout = &image.layout;

    let mut e2a = e2a_header(layout);
    e2a.push('\n');
    for row in &image.e2a {
        e2a.push_str(&encode_e2a_row(row, layout)?);
        e2a.push('\n');
    }
    write_file(&dir.join("e2a.hex"), e2a)?;

    let mut sn = sn_header(layout);
    sn.push('\n');
    for row in &image.sn {
        sn.push_str(&encode_sn_row(row, layout)?);
        sn.push('\n');
    }
    write_file(&dir.join("sn.hex"), sn)?;

    for (engine, words) in image.wmem.iter().enumerate() {
        let mut text = wmem_header(engine);
        text.push('\n');
        for &word in words {
            text.push_str(&format!("{:02x}\n", word as u8));
        }
        write_file(&dir.join(format!("wmem_{engine}.hex")), text)?;
    }

    let manifest = serde_json::to_string_pretty(layout).expect("layout serialization");
    write_file(&dir.join("image_manifest.json"), manifest)
}

fn malformed(file: &Path, line: usize, msg: impl Into<String>) -> ImageError {
    ImageError::Malformed {
        file: file.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn read_lines(path: &Path, expected_header: &str) -> Result<Vec<String>, ImageError> {
    let text = fs::read_to_string(path).map_err(|source| ImageError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == expected_header => {}
        Some(header) => {
            return Err(ImageError::LayoutMismatch {
                file: path.display().to_string(),
                msg: format!("header {header:?} does not match layout {expected_header:?}"),
            })
        }
        None => return Err(malformed(path, 1, "missing header")),
    }
    Ok(lines.map(str::to_owned).collect())
}

/// Read an image set back from `dir`; exact inverse of [`encode_to_dir`].
pub fn decode_from_dir(dir: &Path) -> Result<MemImage, ImageError> {
    let manifest_path = dir.join("image_manifest.json");
    let manifest_text = fs::read_to_string(&manifest_path).map_err(|source| ImageError::Io {
        path: manifest_path.display().to_string(),
        source,
    })?;
    let layout: BitLayout =
        serde_json::from_str(&manifest_text).map_err(|e| ImageError::LayoutMismatch {
            file: manifest_path.display().to_string(),
            msg: e.to_string(),
        })?;

    let e2a_path = dir.join("e2a.hex");
    let lines = read_lines(&e2a_path, &e2a_header(&layout))?;
    if lines.len() != layout.e2a_depth {
        return Err(ImageError::LayoutMismatch {
            file: e2a_path.display().to_string(),
            msg: format!("{} rows, layout says {}", lines.len(), layout.e2a_depth),
        });
    }
    let mut e2a = Vec::with_capacity(lines.len());
    for (index, line) in lines.iter().enumerate() {
        let bits = BitString::from_hex(line, layout.e2a_row_bits() as usize)
            .map_err(|msg| malformed(&e2a_path, index + 2, msg))?;
        let row_count = bits.read(0, layout.e2a_count_bits) as usize;
        let start_addr =
            bits.read(layout.e2a_count_bits as usize, layout.e2a_addr_bits) as usize;
        if start_addr + row_count > layout.sn_depth {
            return Err(malformed(
                &e2a_path,
                index + 2,
                format!("row run {start_addr}+{row_count} exceeds depth {}", layout.sn_depth),
            ));
        }
        e2a.push(MemE2aRow { row_count, start_addr });
    }

    let sn_path = dir.join("sn.hex");
    let lines = read_lines(&sn_path, &sn_header(&layout))?;
    if lines.len() != layout.sn_depth {
        return Err(ImageError::LayoutMismatch {
            file: sn_path.display().to_string(),
            msg: format!("{} rows, layout says {}", lines.len(), layout.sn_depth),
        });
    }
    let slot_bits = (1 + layout.vn_bits + layout.w_addr_bits) as usize;
    let mut sn = Vec::with_capacity(lines.len());
    for (index, line) in lines.iter().enumerate() {
        let bits = BitString::from_hex(line, layout.sn_row_bits() as usize)
            .map_err(|msg| malformed(&sn_path, index + 2, msg))?;
        // Fields run from engine M-1 down to engine 0.
        let mut slots = vec![SnSlot::default(); layout.engines];
        for (engine, slot_out) in slots.iter_mut().enumerate() {
            let offset = (layout.engines - 1 - engine) * slot_bits;
            let enabled = bits.read(offset, 1) == 1;
            let vn = bits.read(offset + 1, layout.vn_bits) as usize;
            let waddr =
                bits.read(offset + 1 + layout.vn_bits as usize, layout.w_addr_bits) as usize;
            if !enabled && (vn != 0 || waddr != 0) {
                return Err(malformed(
                    &sn_path,
                    index + 2,
                    format!("engine {engine} deselected but fields nonzero"),
                ));
            }
            *slot_out = SnSlot { enabled, vn, waddr };
        }
        sn.push(MemSnRow { slots });
    }

    let mut wmem = Vec::with_capacity(layout.engines);
    for engine in 0..layout.engines {
        let path = dir.join(format!("wmem_{engine}.hex"));
        let lines = read_lines(&path, &wmem_header(engine))?;
        if lines.len() > layout.wmem_depth {
            return Err(ImageError::LayoutMismatch {
                file: path.display().to_string(),
                msg: format!("{} words, layout depth {}", lines.len(), layout.wmem_depth),
            });
        }
        let mut words = Vec::with_capacity(lines.len());
        for (index, line) in lines.iter().enumerate() {
            if line.len() != 2 {
                return Err(malformed(&path, index + 2, "expected two hex digits"));
            }
            let byte = u8::from_str_radix(line, 16)
                .map_err(|_| malformed(&path, index + 2, "invalid hex byte"))?;
            if line.chars().any(|c| c.is_ascii_uppercase()) {
                return Err(malformed(&path, index + 2, "uppercase hex digit"));
            }
            words.push(byte as i8);
        }
        wmem.push(words);
    }

    Ok(MemImage { layout, e2a, sn, wmem })
}
