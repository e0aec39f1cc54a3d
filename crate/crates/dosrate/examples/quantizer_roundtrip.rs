//! The midpoint uniform quantizer and its bitwise-faithful codeword form.
//!
//! `quantize(chi, R)` maps a normalized value `chi` in `[-1, 1]` onto the
//! midpoint of one of `2^R` equal cells, so the error is at most `2^-R`.
//! `encode`/`decode` express the same map as an integer index that travels
//! over the channel: decoding reproduces the quantized value bit for bit,
//! which is what keeps the encoder's and decoder's predictors identical.
//!
//! Run with: `cargo run --example quantizer_roundtrip`

use dosrate::quantize::{decode, encode, error_bound, quantize, MAX_BITS};

fn main() -> dosrate::Result<()> {
    // A few concrete values at R = 2 bits (four cells of width 1/2).
    println!("quantize(chi, 2):");
    for chi in [-1.0, -0.6, -0.2, 0.0, 0.3, 0.77, 1.0] {
        println!("  chi = {chi:+.2} -> {:+.3}", quantize(chi, 2)?);
    }

    // The worst-case error halves with every extra bit.
    println!("\nworst-case quantization error for a range of width j = 1:");
    for bits in 1..=8 {
        println!("  R = {bits}: error <= {:.6}", error_bound(1.0, bits)?);
    }

    // Codeword round-trip: encode to an index, decode back, get the exact
    // same floating-point number. Both sides of the channel can therefore
    // apply the identical correction.
    println!("\ncodeword round-trip at R = 6:");
    for chi in [-0.987, -0.25, 0.0, 0.123456, 0.999] {
        let cw = encode(chi, 6)?;
        let back = decode(cw)?;
        let q = quantize(chi, 6)?;
        assert_eq!(back, q, "decode must reproduce quantize exactly");
        println!("  chi = {chi:+.6} -> index {:2} ({} bits) -> {back:+.6}", cw.index, cw.bits);
    }

    // Zero bits is the "nothing transmitted" convention: the only codeword
    // is index 0 and it decodes to 0.0, leaving the receiver's prediction
    // untouched.
    let cw = encode(0.4, 0)?;
    println!(
        "\nR = 0: encode(0.4, 0) = index {} ({} bits), decodes to {}",
        cw.index,
        cw.bits,
        decode(cw)?
    );

    // Inputs outside [-1, 1] (beyond a hair of rounding slack) are refused:
    // in the closed loop this would mean the error left its guaranteed
    // range, which the protocol rules out.
    println!("\nmax supported bits per element: {MAX_BITS}");
    match quantize(1.5, 4) {
        Err(e) => println!("quantize(1.5, 4) -> error: {e}"),
        Ok(v) => println!("quantize(1.5, 4) -> {v} (unexpected)"),
    }
    Ok(())
}
