//! Reed–Solomon error-correction codewords over GF(256), polynomial 0x11D.

/// Multiplies in GF(2^8) modulo x^8 + x^4 + x^3 + x^2 + 1.
fn gf_mul(x: u8, y: u8) -> u8 {
    let mut z: u16 = 0;
    for i in (0..8).rev() {
        z = (z << 1) ^ ((z >> 7) * 0x11D);
        z ^= ((u16::from(y) >> i) & 1) * u16::from(x);
    }
    z as u8
}

/// Generator polynomial `∏ (x − α^i)` for `i < degree`, leading term dropped,
/// coefficients from highest to lowest power.
pub(crate) fn generator(degree: usize) -> Vec<u8> {
    let mut coefs = vec![0u8; degree];
    coefs[degree - 1] = 1;
    let mut root: u8 = 1;
    for _ in 0..degree {
        for j in 0..degree {
            coefs[j] = gf_mul(coefs[j], root);
            if j + 1 < degree {
                coefs[j] ^= coefs[j + 1];
            }
        }
        root = gf_mul(root, 0x02);
    }
    coefs
}

/// Remainder of `data · x^degree` divided by the generator.
pub(crate) fn remainder(data: &[u8], generator: &[u8]) -> Vec<u8> {
    let mut rem = vec![0u8; generator.len()];
    for &b in data {
        let factor = b ^ rem.remove(0);
        rem.push(0);
        for (r, &g) in rem.iter_mut().zip(generator) {
            *r ^= gf_mul(g, factor);
        }
    }
    rem
}
