//! Binary serialization primitives for the "CSAE" checkpoint format.
//!
//! Layout written by the bundle-level save in `models`:
//!   magic "CSAE", version u16 LE, metadata length u32 LE, metadata JSON,
//!   then a sequence of models, each a layer-shape table followed by
//!   64-bit little-endian floats.

use super::{Activation, DenseLayer, ModelParams};
use crate::error::{Error, Result};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use std::io::{Read, Write};

pub const MAGIC: &[u8; 4] = b"CSAE";
pub const VERSION: u16 = 1;

pub fn write_model<W: Write>(w: &mut W, model: &ModelParams) -> std::io::Result<()> {
    w.write_u32::<LittleEndian>(model.layers.len() as u32)?;
    for l in &model.layers {
        w.write_u32::<LittleEndian>(l.input_size as u32)?;
        w.write_u32::<LittleEndian>(l.output_size as u32)?;
        w.write_u8(l.activation.tag())?;
        for t in &l.trainable {
            w.write_u8(*t as u8)?;
        }
        for v in &l.weights {
            w.write_f64::<LittleEndian>(*v)?;
        }
        for v in &l.biases {
            w.write_f64::<LittleEndian>(*v)?;
        }
    }
    Ok(())
}

pub fn read_model<R: Read>(r: &mut R) -> Result<ModelParams> {
    let map_io = |e: std::io::Error| Error::corrupt("<checkpoint>", e.to_string());
    let n_layers = r.read_u32::<LittleEndian>().map_err(map_io)? as usize;
    if n_layers > 1_000_000 {
        return Err(Error::corrupt("<checkpoint>", "implausible layer count"));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let input_size = r.read_u32::<LittleEndian>().map_err(map_io)? as usize;
        let output_size = r.read_u32::<LittleEndian>().map_err(map_io)? as usize;
        let activation = Activation::from_tag(r.read_u8().map_err(map_io)?)?;
        let mut trainable = Vec::with_capacity(output_size);
        for _ in 0..output_size {
            trainable.push(r.read_u8().map_err(map_io)? != 0);
        }
        let mut weights = Vec::with_capacity(input_size * output_size);
        for _ in 0..input_size * output_size {
            weights.push(r.read_f64::<LittleEndian>().map_err(map_io)?);
        }
        let mut biases = Vec::with_capacity(output_size);
        for _ in 0..output_size {
            biases.push(r.read_f64::<LittleEndian>().map_err(map_io)?);
        }
        layers.push(DenseLayer {
            weights,
            biases,
            input_size,
            output_size,
            activation,
            trainable,
        });
    }
    ModelParams::new(layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn model_binary_round_trip_is_exact() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let mut model = ModelParams::new(vec![
            DenseLayer::init(8, 5, Activation::LeakyRelu, &mut rng),
            DenseLayer::init(5, 3, Activation::Linear, &mut rng),
        ])
        .unwrap();
        model.layers[0].set_rows_trainable(2..4, false);
        let mut buf = Vec::new();
        write_model(&mut buf, &model).unwrap();
        let back = read_model(&mut buf.as_slice()).unwrap();
        assert_eq!(model, back);
    }
}
