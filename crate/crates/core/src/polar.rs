//! Polar codes in natural (non bit-reversed) order.
//!
//! `x = u * G_n` over GF(2) with `G_n = F^{(x) log2 n}`, `F = [[1,0],[1,1]]`.
//! Entry `G_n[j][c]` is 1 exactly when the bits of `c` are a subset of the
//! bits of `j`, so the transform is a superset-XOR butterfly and is its own
//! inverse.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolarCode {
    n: usize,
    frozen: Vec<usize>,
    info: Vec<usize>,
}

/// In-place `x = u * G_n` on a length-`n` bit vector (`n` a power of two).
pub fn polar_transform(bits: &mut [u8]) {
    let n = bits.len();
    let mut h = 1;
    while h < n {
        for j in 0..n {
            if j & h != 0 {
                bits[j ^ h] ^= bits[j];
            }
        }
        h <<= 1;
    }
}

/// Bhattacharyya parameters of the `n` synthetic channels for a BEC with
/// erasure probability `exp(-rate * EbN0)`, returned as natural logarithms.
pub fn bhattacharyya_log(n: usize, rate: f64, design_ebn0_db: f64) -> Vec<f64> {
    let ebn0 = 10f64.powf(design_ebn0_db / 10.0);
    let mut z = vec![-rate * ebn0];
    while z.len() < n {
        let mut next = Vec::with_capacity(z.len() * 2);
        for &lz in &z {
            // ln(2z - z^2) = ln z + ln(2 - z)
            next.push(lz + (2.0 - lz.exp()).ln());
            next.push(2.0 * lz);
        }
        z = next;
    }
    z
}

impl PolarCode {
    pub fn new(n: usize, mut frozen: Vec<usize>) -> Result<Self> {
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::InvalidArgument(format!("code length {n} is not a power of two")));
        }
        frozen.sort_unstable();
        frozen.dedup();
        if frozen.len() >= n || frozen.iter().any(|&f| f >= n) {
            return Err(Error::InvalidArgument(format!("invalid frozen set for n = {n}")));
        }
        let info = (0..n).filter(|i| frozen.binary_search(i).is_err()).collect();
        Ok(Self { n, frozen, info })
    }

    /// Freezes the `n - m` least reliable positions by Bhattacharyya bound.
    pub fn design(n: usize, m: usize, design_ebn0_db: f64) -> Result<Self> {
        if m == 0 || m >= n {
            return Err(Error::InvalidArgument(format!("information length {m} outside 1..{n}")));
        }
        if !n.is_power_of_two() {
            return Err(Error::InvalidArgument(format!("code length {n} is not a power of two")));
        }
        let z = bhattacharyya_log(n, m as f64 / n as f64, design_ebn0_db);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| z[b].total_cmp(&z[a]).then(a.cmp(&b)));
        Self::new(n, order[..n - m].to_vec())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.info.len()
    }

    pub fn rate(&self) -> f64 {
        self.m() as f64 / self.n as f64
    }

    pub fn frozen(&self) -> &[usize] {
        &self.frozen
    }

    pub fn info_set(&self) -> &[usize] {
        &self.info
    }

    pub fn encode(&self, b: &[u8]) -> Result<Vec<u8>> {
        if b.len() != self.m() {
            return Err(Error::ShapeMismatch(format!(
                "message has {} bits, code expects {}",
                b.len(),
                self.m()
            )));
        }
        let mut u = vec![0u8; self.n];
        for (&i, &bit) in self.info.iter().zip(b) {
            u[i] = bit & 1;
        }
        polar_transform(&mut u);
        Ok(u)
    }

    /// Information bits of a (possibly erroneous) codeword: `(x G_n)` on the
    /// information set.
    pub fn extract_info(&self, x: &[u8]) -> Result<Vec<u8>> {
        if x.len() != self.n {
            return Err(Error::ShapeMismatch(format!("word has {} bits, expected {}", x.len(), self.n)));
        }
        let mut u = x.to_vec();
        polar_transform(&mut u);
        Ok(self.info.iter().map(|&i| u[i]).collect())
    }

    /// `(n - m) x n` parity-check matrix; row `i` is column `frozen[i]` of `G_n`.
    pub fn parity_check(&self) -> Vec<Vec<u8>> {
        self.frozen
            .iter()
            .map(|&f| (0..self.n).map(|j| u8::from(j & f == f)).collect())
            .collect()
    }

    /// `P x` over GF(2).
    pub fn syndrome(&self, x: &[u8]) -> Vec<u8> {
        let mut u = x.to_vec();
        polar_transform(&mut u);
        self.frozen.iter().map(|&f| u[f]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_bit_example() {
        let code = PolarCode::new(4, vec![0, 1]).unwrap();
        assert_eq!(code.encode(&[1, 0]).unwrap(), vec![1, 0, 1, 0]);
        assert_eq!(code.parity_check().len(), 2);
        assert_eq!(code.syndrome(&[1, 0, 1, 0]), vec![0, 0]);
    }

    #[test]
    fn design_orders_four_channels() {
        let z = bhattacharyya_log(4, 0.5, 0.0);
        assert!(z[0] > z[1] && z[0] > z[2]);
        assert!(z[3] < z[1] && z[3] < z[2]);
        let code = PolarCode::design(4, 1, 0.0).unwrap();
        assert_eq!(code.info_set(), &[3]);
    }

    #[test]
    fn design_keeps_index_zero_frozen() {
        for (n, m) in [(16, 8), (64, 32)] {
            let code = PolarCode::design(n, m, 5.0).unwrap();
            assert_eq!(code.m(), m);
            assert!(code.frozen().contains(&0));
            assert!(code.info_set().contains(&(n - 1)));
        }
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(PolarCode::new(6, vec![0]).is_err());
        assert!(PolarCode::design(8, 8, 5.0).is_err());
        let code = PolarCode::design(8, 4, 5.0).unwrap();
        assert!(code.encode(&[0, 1]).is_err());
    }

    #[test]
    fn extract_inverts_encode() {
        let code = PolarCode::design(16, 8, 5.0).unwrap();
        let b = [1, 0, 1, 1, 0, 0, 1, 0];
        let x = code.encode(&b).unwrap();
        assert_eq!(code.extract_info(&x).unwrap(), b);
    }
}
