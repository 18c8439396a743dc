//! Baseline sequential DCT JPEG codec used by the JPEG-quality distortion.
//!
//! The encoder writes JFIF files with 4:2:0 chroma subsampling, the example quantization
//! tables of the standard scaled by the usual IJG quality formula, and the example Huffman
//! tables. The decoder handles baseline, Huffman-coded, single-scan files (which covers
//! everything the encoder emits) and uses pixel replication for chroma upsampling.
//!
//! All arithmetic is plain IEEE `f64` with constant cosine tables, so the round trip is
//! bit-reproducible across platforms.

use crate::error::{Error, Result};
use crate::image::{quantize_255, Image};

const LUMA_QUANT: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

const CHROMA_QUANT: [u16; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99, //
    18, 21, 26, 66, 99, 99, 99, 99, //
    24, 26, 56, 99, 99, 99, 99, 99, //
    47, 66, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99,
];

/// `ZIGZAG[i]` is the natural (row-major) index of the i-th coefficient in zigzag order.
const ZIGZAG: [usize; 64] = [
    0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5, 12, 19, 26, 33, 40, 48, 41, 34, 27,
    20, 13, 6, 7, 14, 21, 28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51, 58,
    59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63,
];

const DC_LUMA_BITS: [u8; 16] = [0, 1, 5, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0];
const DC_CHROMA_BITS: [u8; 16] = [0, 3, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0];
const DC_VALUES: [u8; 12] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11];
const AC_LUMA_BITS: [u8; 16] = [0, 2, 1, 3, 3, 2, 4, 3, 5, 5, 4, 4, 0, 0, 1, 0x7d];
const AC_CHROMA_BITS: [u8; 16] = [0, 2, 1, 2, 4, 4, 3, 4, 7, 5, 4, 4, 0, 1, 2, 0x77];
const AC_LUMA_VALUES: [u8; 162] = [
    0x01, 0x02, 0x03, 0x00, 0x04, 0x11, 0x05, 0x12, 0x21, 0x31, 0x41, 0x06, 0x13, 0x51, 0x61, 0x07,
    0x22, 0x71, 0x14, 0x32, 0x81, 0x91, 0xA1, 0x08, 0x23, 0x42, 0xB1, 0xC1, 0x15, 0x52, 0xD1, 0xF0,
    0x24, 0x33, 0x62, 0x72, 0x82, 0x09, 0x0A, 0x16, 0x17, 0x18, 0x19, 0x1A, 0x25, 0x26, 0x27, 0x28,
    0x29, 0x2A, 0x34, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3A, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48, 0x49,
    0x4A, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5A, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68, 0x69,
    0x6A, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79, 0x7A, 0x83, 0x84, 0x85, 0x86, 0x87, 0x88, 0x89,
    0x8A, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9A, 0xA2, 0xA3, 0xA4, 0xA5, 0xA6, 0xA7,
    0xA8, 0xA9, 0xAA, 0xB2, 0xB3, 0xB4, 0xB5, 0xB6, 0xB7, 0xB8, 0xB9, 0xBA, 0xC2, 0xC3, 0xC4, 0xC5,
    0xC6, 0xC7, 0xC8, 0xC9, 0xCA, 0xD2, 0xD3, 0xD4, 0xD5, 0xD6, 0xD7, 0xD8, 0xD9, 0xDA, 0xE1, 0xE2,
    0xE3, 0xE4, 0xE5, 0xE6, 0xE7, 0xE8, 0xE9, 0xEA, 0xF1, 0xF2, 0xF3, 0xF4, 0xF5, 0xF6, 0xF7, 0xF8,
    0xF9, 0xFA,
];
const AC_CHROMA_VALUES: [u8; 162] = [
    0x00, 0x01, 0x02, 0x03, 0x11, 0x04, 0x05, 0x21, 0x31, 0x06, 0x12, 0x41, 0x51, 0x07, 0x61, 0x71,
    0x13, 0x22, 0x32, 0x81, 0x08, 0x14, 0x42, 0x91, 0xA1, 0xB1, 0xC1, 0x09, 0x23, 0x33, 0x52, 0xF0,
    0x15, 0x62, 0x72, 0xD1, 0x0A, 0x16, 0x24, 0x34, 0xE1, 0x25, 0xF1, 0x17, 0x18, 0x19, 0x1A, 0x26,
    0x27, 0x28, 0x29, 0x2A, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3A, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48,
    0x49, 0x4A, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5A, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68,
    0x69, 0x6A, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79, 0x7A, 0x82, 0x83, 0x84, 0x85, 0x86, 0x87,
    0x88, 0x89, 0x8A, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9A, 0xA2, 0xA3, 0xA4, 0xA5,
    0xA6, 0xA7, 0xA8, 0xA9, 0xAA, 0xB2, 0xB3, 0xB4, 0xB5, 0xB6, 0xB7, 0xB8, 0xB9, 0xBA, 0xC2, 0xC3,
    0xC4, 0xC5, 0xC6, 0xC7, 0xC8, 0xC9, 0xCA, 0xD2, 0xD3, 0xD4, 0xD5, 0xD6, 0xD7, 0xD8, 0xD9, 0xDA,
    0xE2, 0xE3, 0xE4, 0xE5, 0xE6, 0xE7, 0xE8, 0xE9, 0xEA, 0xF2, 0xF3, 0xF4, 0xF5, 0xF6, 0xF7, 0xF8,
    0xF9, 0xFA,
];

/// cos(k·π/16) for k = 0..=8.
const COS16: [f64; 9] = [
    1.0,
    0.980_785_280_403_230_4,
    0.923_879_532_511_286_7,
    0.831_469_612_302_545_2,
    0.707_106_781_186_547_5,
    0.555_570_233_019_602_2,
    0.382_683_432_365_089_8,
    0.195_090_322_016_128_3,
    0.0,
];

/// Basis table `BASIS[u][x] = 0.5 · C(u) · cos((2x+1)uπ/16)`.
fn basis() -> [[f64; 8]; 8] {
    let mut t = [[0.0; 8]; 8];
    for (u, row) in t.iter_mut().enumerate() {
        for (x, v) in row.iter_mut().enumerate() {
            let m = ((2 * x + 1) * u) % 32;
            let c = match m {
                0..=8 => COS16[m],
                9..=16 => -COS16[16 - m],
                17..=24 => -COS16[m - 16],
                _ => COS16[32 - m],
            };
            let cu = if u == 0 { COS16[4] } else { 1.0 };
            *v = 0.5 * cu * c;
        }
    }
    t
}

/// Quantization table for `quality` in 1..=100, natural order.
pub fn scaled_quant_table(base: &[u16; 64], quality: u8) -> [u16; 64] {
    let q = u32::from(quality.clamp(1, 100));
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    let mut out = [0u16; 64];
    for (o, &b) in out.iter_mut().zip(base) {
        *o = ((u32::from(b) * scale + 50) / 100).clamp(1, 255) as u16;
    }
    out
}

fn fdct(block: &mut [f64; 64], basis: &[[f64; 8]; 8]) {
    let mut tmp = [0.0; 64];
    for y in 0..8 {
        for u in 0..8 {
            let mut s = 0.0;
            for x in 0..8 {
                s += basis[u][x] * block[y * 8 + x];
            }
            tmp[y * 8 + u] = s;
        }
    }
    for u in 0..8 {
        for v in 0..8 {
            let mut s = 0.0;
            for y in 0..8 {
                s += basis[v][y] * tmp[y * 8 + u];
            }
            block[v * 8 + u] = s;
        }
    }
}

fn idct(block: &mut [f64; 64], basis: &[[f64; 8]; 8]) {
    let mut tmp = [0.0; 64];
    for v in 0..8 {
        for x in 0..8 {
            let mut s = 0.0;
            for u in 0..8 {
                s += basis[u][x] * block[v * 8 + u];
            }
            tmp[v * 8 + x] = s;
        }
    }
    for x in 0..8 {
        for y in 0..8 {
            let mut s = 0.0;
            for v in 0..8 {
                s += basis[v][y] * tmp[v * 8 + x];
            }
            block[y * 8 + x] = s;
        }
    }
}

struct HuffEncoder {
    codes: [(u16, u8); 256],
}

impl HuffEncoder {
    fn new(bits: &[u8; 16], values: &[u8]) -> Self {
        let mut codes = [(0u16, 0u8); 256];
        let mut code = 0u16;
        let mut k = 0;
        for (len, &n) in bits.iter().enumerate() {
            for _ in 0..n {
                codes[values[k] as usize] = (code, len as u8 + 1);
                code += 1;
                k += 1;
            }
            code <<= 1;
        }
        Self { codes }
    }
}

struct BitWriter {
    out: Vec<u8>,
    acc: u32,
    n: u8,
}

impl BitWriter {
    fn write(&mut self, value: u16, len: u8) {
        for i in (0..len).rev() {
            self.acc = (self.acc << 1) | u32::from((value >> i) & 1);
            self.n += 1;
            if self.n == 8 {
                let byte = self.acc as u8;
                self.out.push(byte);
                if byte == 0xFF {
                    self.out.push(0x00);
                }
                self.acc = 0;
                self.n = 0;
            }
        }
    }

    fn flush(&mut self) {
        if self.n > 0 {
            let pad = 8 - self.n;
            self.write((1u16 << pad) - 1, pad);
        }
    }
}

fn magnitude_category(v: i32) -> u8 {
    (32 - v.unsigned_abs().leading_zeros()) as u8
}

fn encode_block(
    w: &mut BitWriter,
    coeffs: &[i32; 64],
    prev_dc: &mut i32,
    dc: &HuffEncoder,
    ac: &HuffEncoder,
) {
    let put_value = |w: &mut BitWriter, v: i32, cat: u8| {
        if cat > 0 {
            let bits = if v < 0 { v + (1 << cat) - 1 } else { v };
            w.write(bits as u16, cat);
        }
    };
    let diff = coeffs[0] - *prev_dc;
    *prev_dc = coeffs[0];
    let cat = magnitude_category(diff);
    let (code, len) = dc.codes[cat as usize];
    w.write(code, len);
    put_value(w, diff, cat);

    let mut run = 0u8;
    for &idx in &ZIGZAG[1..] {
        let v = coeffs[idx];
        if v == 0 {
            run += 1;
            continue;
        }
        while run >= 16 {
            let (code, len) = ac.codes[0xF0];
            w.write(code, len);
            run -= 16;
        }
        let cat = magnitude_category(v);
        let (code, len) = ac.codes[((run << 4) | cat) as usize];
        w.write(code, len);
        put_value(w, v, cat);
        run = 0;
    }
    if run > 0 {
        let (code, len) = ac.codes[0x00];
        w.write(code, len);
    }
}

fn push_segment(out: &mut Vec<u8>, marker: u8, payload: &[u8]) {
    out.extend_from_slice(&[0xFF, marker]);
    out.extend_from_slice(&((payload.len() + 2) as u16).to_be_bytes());
    out.extend_from_slice(payload);
}

/// Encodes `img` as a baseline JFIF stream with 4:2:0 subsampling at `quality` (1..=100).
pub fn encode(img: &Image, quality: u8) -> Result<Vec<u8>> {
    let (w, h) = img.dims();
    if w > u16::MAX as usize || h > u16::MAX as usize {
        return Err(Error::CodecFailure(format!("{w}x{h} exceeds JPEG limits")));
    }
    let lq = scaled_quant_table(&LUMA_QUANT, quality);
    let cq = scaled_quant_table(&CHROMA_QUANT, quality);

    // Full-resolution YCbCr planes over the MCU-padded area, edges replicated.
    let pw = w.div_ceil(16) * 16;
    let ph = h.div_ceil(16) * 16;
    let mut planes = [vec![0.0f64; pw * ph], vec![0.0f64; pw * ph], vec![0.0f64; pw * ph]];
    for y in 0..ph {
        for x in 0..pw {
            let [r, g, b] = img.pixel(x.min(w - 1), y.min(h - 1)).map(f64::from);
            let i = y * pw + x;
            planes[0][i] = 0.299 * r + 0.587 * g + 0.114 * b;
            planes[1][i] = -0.168_735_892 * r - 0.331_264_108 * g + 0.5 * b + 128.0;
            planes[2][i] = 0.5 * r - 0.418_687_589 * g - 0.081_312_411 * b + 128.0;
        }
    }
    let (cw, ch) = (pw / 2, ph / 2);
    let sub = |p: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; cw * ch];
        for y in 0..ch {
            for x in 0..cw {
                let i = 2 * y * pw + 2 * x;
                out[y * cw + x] = 0.25 * (p[i] + p[i + 1] + p[i + pw] + p[i + pw + 1]);
            }
        }
        out
    };
    let cb = sub(&planes[1]);
    let cr = sub(&planes[2]);
    let luma = std::mem::take(&mut planes[0]);

    let mut out = Vec::new();
    out.extend_from_slice(&[0xFF, 0xD8]);
    push_segment(&mut out, 0xE0, b"JFIF\0\x01\x01\x00\x00\x01\x00\x01\x00\x00");
    for (id, table) in [(0u8, &lq), (1u8, &cq)] {
        let mut p = vec![id];
        p.extend(ZIGZAG.iter().map(|&i| table[i] as u8));
        push_segment(&mut out, 0xDB, &p);
    }
    let mut sof = vec![8];
    sof.extend_from_slice(&(h as u16).to_be_bytes());
    sof.extend_from_slice(&(w as u16).to_be_bytes());
    sof.extend_from_slice(&[3, 1, 0x22, 0, 2, 0x11, 1, 3, 0x11, 1]);
    push_segment(&mut out, 0xC0, &sof);
    for (class_id, bits, values) in [
        (0x00u8, &DC_LUMA_BITS, &DC_VALUES[..]),
        (0x10, &AC_LUMA_BITS, &AC_LUMA_VALUES[..]),
        (0x01, &DC_CHROMA_BITS, &DC_VALUES[..]),
        (0x11, &AC_CHROMA_BITS, &AC_CHROMA_VALUES[..]),
    ] {
        let mut p = vec![class_id];
        p.extend_from_slice(bits);
        p.extend_from_slice(values);
        push_segment(&mut out, 0xC4, &p);
    }
    push_segment(&mut out, 0xDA, &[3, 1, 0x00, 2, 0x11, 3, 0x11, 0, 63, 0]);

    let basis = basis();
    let dc_l = HuffEncoder::new(&DC_LUMA_BITS, &DC_VALUES);
    let ac_l = HuffEncoder::new(&AC_LUMA_BITS, &AC_LUMA_VALUES);
    let dc_c = HuffEncoder::new(&DC_CHROMA_BITS, &DC_VALUES);
    let ac_c = HuffEncoder::new(&AC_CHROMA_BITS, &AC_CHROMA_VALUES);
    let mut bw = BitWriter { out: Vec::new(), acc: 0, n: 0 };
    let mut prev = [0i32; 3];

    let quantize_block = |plane: &[f64], stride: usize, bx: usize, by: usize, q: &[u16; 64]| {
        let mut block = [0.0f64; 64];
        for y in 0..8 {
            for x in 0..8 {
                block[y * 8 + x] = plane[(by + y) * stride + bx + x] - 128.0;
            }
        }
        fdct(&mut block, &basis);
        let mut c = [0i32; 64];
        for i in 0..64 {
            c[i] = (block[i] / f64::from(q[i])).round() as i32;
        }
        c
    };

    for my in 0..ph / 16 {
        for mx in 0..pw / 16 {
            for (dy, dx) in [(0, 0), (0, 8), (8, 0), (8, 8)] {
                let c = quantize_block(&luma, pw, mx * 16 + dx, my * 16 + dy, &lq);
                encode_block(&mut bw, &c, &mut prev[0], &dc_l, &ac_l);
            }
            let c = quantize_block(&cb, cw, mx * 8, my * 8, &cq);
            encode_block(&mut bw, &c, &mut prev[1], &dc_c, &ac_c);
            let c = quantize_block(&cr, cw, mx * 8, my * 8, &cq);
            encode_block(&mut bw, &c, &mut prev[2], &dc_c, &ac_c);
        }
    }
    bw.flush();
    out.extend_from_slice(&bw.out);
    out.extend_from_slice(&[0xFF, 0xD9]);
    Ok(out)
}

#[derive(Clone, Default)]
struct HuffDecoder {
    maxcode: [i32; 17],
    valptr: [i32; 17],
    mincode: [i32; 17],
    values: Vec<u8>,
}

impl HuffDecoder {
    fn new(bits: &[u8], values: &[u8]) -> Self {
        let mut d = HuffDecoder { maxcode: [-1; 17], values: values.to_vec(), ..Default::default() };
        let mut code = 0i32;
        let mut k = 0i32;
        for len in 1..=16 {
            let n = i32::from(bits[len - 1]);
            if n > 0 {
                d.valptr[len] = k;
                d.mincode[len] = code;
                code += n;
                k += n;
                d.maxcode[len] = code - 1;
            }
            code <<= 1;
        }
        d
    }
}

struct BitReader<'a> {
    data: &'a [u8],
    pos: usize,
    acc: u32,
    n: u8,
}

impl BitReader<'_> {
    fn bit(&mut self) -> u32 {
        if self.n == 0 {
            let mut byte = 0u8;
            if self.pos < self.data.len() {
                byte = self.data[self.pos];
                if byte == 0xFF {
                    match self.data.get(self.pos + 1) {
                        Some(0x00) => self.pos += 2,
                        // A marker: stop consuming and feed zeros.
                        _ => byte = 0,
                    }
                } else {
                    self.pos += 1;
                }
            }
            self.acc = u32::from(byte);
            self.n = 8;
        }
        self.n -= 1;
        (self.acc >> self.n) & 1
    }

    fn bits(&mut self, n: u8) -> u32 {
        (0..n).fold(0, |v, _| (v << 1) | self.bit())
    }

    fn decode(&mut self, h: &HuffDecoder) -> Result<u8> {
        let mut code = 0i32;
        for len in 1..=16 {
            code = (code << 1) | self.bit() as i32;
            if h.maxcode[len] >= 0 && code <= h.maxcode[len] {
                let idx = h.valptr[len] + code - h.mincode[len];
                return h
                    .values
                    .get(idx as usize)
                    .copied()
                    .ok_or_else(|| Error::CodecFailure("bad huffman index".into()));
            }
        }
        Err(Error::CodecFailure("invalid huffman code".into()))
    }

    fn receive_extend(&mut self, cat: u8) -> i32 {
        if cat == 0 {
            return 0;
        }
        let v = self.bits(cat) as i32;
        if v < (1 << (cat - 1)) {
            v - (1 << cat) + 1
        } else {
            v
        }
    }
}

struct Component {
    id: u8,
    h: usize,
    v: usize,
    tq: usize,
    td: usize,
    ta: usize,
}

/// Decodes a baseline, single-scan JPEG stream into RGB.
pub fn decode(data: &[u8]) -> Result<Image> {
    let fail = |m: &str| Error::CodecFailure(m.to_string());
    if data.len() < 4 || data[0] != 0xFF || data[1] != 0xD8 {
        return Err(fail("missing SOI marker"));
    }
    let mut pos = 2;
    let mut qt = [[0u16; 64]; 4];
    let mut dc_tables: [HuffDecoder; 4] = Default::default();
    let mut ac_tables: [HuffDecoder; 4] = Default::default();
    let mut comps: Vec<Component> = Vec::new();
    let (mut width, mut height) = (0usize, 0usize);

    loop {
        while pos < data.len() && data[pos] == 0xFF && data.get(pos + 1) == Some(&0xFF) {
            pos += 1;
        }
        if pos + 4 > data.len() || data[pos] != 0xFF {
            return Err(fail("truncated stream"));
        }
        let marker = data[pos + 1];
        let len = usize::from(u16::from_be_bytes([data[pos + 2], data[pos + 3]]));
        if len < 2 || pos + 2 + len > data.len() {
            return Err(fail("bad segment length"));
        }
        let seg = &data[pos + 4..pos + 2 + len];
        pos += 2 + len;
        match marker {
            0xDB => {
                let mut s = seg;
                while !s.is_empty() {
                    let (pq, tq) = (s[0] >> 4, usize::from(s[0] & 0x0F));
                    if pq != 0 || tq > 3 || s.len() < 65 {
                        return Err(fail("unsupported quantization table"));
                    }
                    for (i, &z) in ZIGZAG.iter().enumerate() {
                        qt[tq][z] = u16::from(s[1 + i]);
                    }
                    s = &s[65..];
                }
            }
            0xC4 => {
                let mut s = seg;
                while !s.is_empty() {
                    if s.len() < 17 {
                        return Err(fail("short huffman table"));
                    }
                    let (tc, th) = (s[0] >> 4, usize::from(s[0] & 0x0F));
                    let count: usize = s[1..17].iter().map(|&b| usize::from(b)).sum();
                    if th > 3 || s.len() < 17 + count {
                        return Err(fail("bad huffman table"));
                    }
                    let table = HuffDecoder::new(&s[1..17], &s[17..17 + count]);
                    match tc {
                        0 => dc_tables[th] = table,
                        1 => ac_tables[th] = table,
                        _ => return Err(fail("bad huffman class")),
                    }
                    s = &s[17 + count..];
                }
            }
            0xC0 | 0xC1 => {
                if seg.len() < 6 || seg[0] != 8 {
                    return Err(fail("only 8-bit baseline frames are supported"));
                }
                height = usize::from(u16::from_be_bytes([seg[1], seg[2]]));
                width = usize::from(u16::from_be_bytes([seg[3], seg[4]]));
                let n = usize::from(seg[5]);
                if seg.len() < 6 + 3 * n || !(n == 1 || n == 3) || width == 0 || height == 0 {
                    return Err(fail("bad frame header"));
                }
                for c in seg[6..6 + 3 * n].chunks(3) {
                    let (h, v) = (usize::from(c[1] >> 4), usize::from(c[1] & 0x0F));
                    if !(1..=2).contains(&h) || !(1..=2).contains(&v) {
                        return Err(fail("unsupported sampling factors"));
                    }
                    comps.push(Component { id: c[0], h, v, tq: usize::from(c[2] & 3), td: 0, ta: 0 });
                }
            }
            0xC2 | 0xC3 | 0xC5..=0xC7 | 0xC9..=0xCB | 0xCD..=0xCF => {
                return Err(fail("only baseline sequential JPEG is supported"));
            }
            0xDD => return Err(fail("restart intervals are not supported")),
            0xDA => {
                if comps.is_empty() {
                    return Err(fail("scan before frame header"));
                }
                let ns = usize::from(seg[0]);
                if ns != comps.len() || seg.len() < 1 + 2 * ns {
                    return Err(fail("only single interleaved scans are supported"));
                }
                for s in seg[1..1 + 2 * ns].chunks(2) {
                    let c = comps
                        .iter_mut()
                        .find(|c| c.id == s[0])
                        .ok_or_else(|| fail("scan references unknown component"))?;
                    c.td = usize::from(s[1] >> 4) & 3;
                    c.ta = usize::from(s[1] & 0x0F) & 3;
                }
                break;
            }
            0xD9 => return Err(fail("no scan before EOI")),
            _ => {}
        }
    }

    let hmax = comps.iter().map(|c| c.h).max().unwrap_or(1);
    let vmax = comps.iter().map(|c| c.v).max().unwrap_or(1);
    let mcux = width.div_ceil(8 * hmax);
    let mcuy = height.div_ceil(8 * vmax);
    let basis = basis();
    let mut planes: Vec<(usize, Vec<f64>)> = comps
        .iter()
        .map(|c| {
            let stride = mcux * c.h * 8;
            (stride, vec![0.0; stride * mcuy * c.v * 8])
        })
        .collect();
    let mut reader = BitReader { data: &data[pos..], pos: 0, acc: 0, n: 0 };
    let mut prev = vec![0i32; comps.len()];

    for my in 0..mcuy {
        for mx in 0..mcux {
            for (ci, c) in comps.iter().enumerate() {
                for by in 0..c.v {
                    for bx in 0..c.h {
                        let mut block = [0.0f64; 64];
                        let cat = reader.decode(&dc_tables[c.td])?;
                        if cat > 11 {
                            return Err(fail("bad DC category"));
                        }
                        prev[ci] += reader.receive_extend(cat);
                        block[0] = f64::from(prev[ci]) * f64::from(qt[c.tq][0]);
                        let mut k = 1;
                        while k < 64 {
                            let rs = reader.decode(&ac_tables[c.ta])?;
                            let (run, size) = (usize::from(rs >> 4), rs & 0x0F);
                            if size == 0 {
                                if run == 15 {
                                    k += 16;
                                    continue;
                                }
                                break;
                            }
                            k += run;
                            if k > 63 {
                                return Err(fail("coefficient index overflow"));
                            }
                            let z = ZIGZAG[k];
                            block[z] = f64::from(reader.receive_extend(size)) * f64::from(qt[c.tq][z]);
                            k += 1;
                        }
                        idct(&mut block, &basis);
                        let (stride, plane) = &mut planes[ci];
                        let ox = (mx * c.h + bx) * 8;
                        let oy = (my * c.v + by) * 8;
                        for y in 0..8 {
                            for x in 0..8 {
                                plane[(oy + y) * *stride + ox + x] =
                                    (block[y * 8 + x] + 128.0).clamp(0.0, 255.0);
                            }
                        }
                    }
                }
            }
        }
    }

    let sample = |ci: usize, x: usize, y: usize| -> f64 {
        let c = &comps[ci];
        let (stride, plane) = &planes[ci];
        plane[(y * c.v / vmax) * stride + x * c.h / hmax]
    };
    let mut pixels = Vec::with_capacity(width * height * 3);
    for y in 0..height {
        for x in 0..width {
            if comps.len() == 1 {
                let v = quantize_255(sample(0, x, y));
                pixels.extend_from_slice(&[v, v, v]);
            } else {
                let yy = sample(0, x, y);
                let cb = sample(1, x, y) - 128.0;
                let cr = sample(2, x, y) - 128.0;
                pixels.push(quantize_255(yy + 1.402 * cr));
                pixels.push(quantize_255(yy - 0.344_136_286 * cb - 0.714_136_286 * cr));
                pixels.push(quantize_255(yy + 1.772 * cb));
            }
        }
    }
    Image::new(width, height, pixels)
}

/// Encode at `quality` and decode back.
pub fn round_trip(img: &Image, quality: u8) -> Result<Image> {
    let decoded = decode(&encode(img, quality)?)?;
    if decoded.dims() != img.dims() {
        return Err(Error::CodecFailure("round trip changed dimensions".into()));
    }
    Ok(decoded)
}

/// Peak signal-to-noise ratio in dB over all channels; infinite for identical images.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", a.dims(), b.dims())));
    }
    let n = a.pixels().len() as f64;
    let mse = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&p, &q)| {
            let d = f64::from(p) - f64::from(q);
            d * d
        })
        .sum::<f64>()
        / n;
    Ok(if mse == 0.0 { f64::INFINITY } else { 10.0 * (255.0 * 255.0 / mse).log10() })
}
