//! Physical-to-DRAM address mapping.
//!
//! Each output bit (channel, rank, bank, row, column) is the XOR of a set
//! of physical-address bits, i.e. the map is a GF(2) matrix applied to the
//! address bits above the 64B block offset. Bank partitioning layers a
//! swap rule on top of the matrix: host addresses whose hashed bank lands
//! in a reserved bank exchange their bank bits with the top row bits, and
//! the reserved top chunks of the physical space map to the reserved banks
//! through a direct, non-hashed layout.

use super::{Color, DramAddress, PhysicalAddress, BLOCK_SHIFT};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MapError {
    #[error("physical address {0:#x} outside capacity {1:#x}")]
    OutOfRange(u64, u64),
    #[error("dimension {0} is not a nonzero power of two")]
    BadDimension(&'static str),
    #[error("mask count {got} for {field} does not match dimension bits {want}")]
    MaskCount {
        field: &'static str,
        got: usize,
        want: usize,
    },
    #[error("mapping matrix is singular: not a bijection")]
    Singular,
    #[error("partitioned mode requires top chunk bits only in row masks (bit {0} misused)")]
    ChunkBitMisused(u32),
    #[error("partitioned mode requires identity top row bits (row bit {0})")]
    ChunkRowNotIdentity(usize),
    #[error("reserved bank count {0} must be < total banks")]
    BadReservation(u32),
    #[error("unknown mapping key {0}")]
    UnknownKey(String),
    #[error("bad mask value {0}")]
    BadValue(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum MapMode {
    Baseline,
    Partitioned,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MappingConfig {
    pub channels: u32,
    pub ranks: u32,
    pub banks: u32,
    pub bank_groups: u32,
    pub rows: u32,
    pub columns: u32,
    pub reserved_banks: u32,
    pub mode: MapMode,
    /// XOR masks over physical-address bits, LSB-first per output field.
    pub channel_masks: Vec<u64>,
    pub rank_masks: Vec<u64>,
    pub bank_masks: Vec<u64>,
    pub row_masks: Vec<u64>,
    pub column_masks: Vec<u64>,
}

fn log2_exact(v: u32, name: &'static str) -> Result<u32, MapError> {
    if v == 0 || !v.is_power_of_two() {
        return Err(MapError::BadDimension(name));
    }
    Ok(v.trailing_zeros())
}

fn parity(x: u64) -> u64 {
    (x.count_ones() & 1) as u64
}

impl MappingConfig {
    /// Documented default mask pattern for a given geometry.
    ///
    /// Columns take frame-offset bits directly; dedicated channel, rank and
    /// bank bits sit just above and each XOR one or two row bits. Channel
    /// and rank partners land above the system-row boundary so they form
    /// the page colors. The group-selecting bank bit is fed by the lowest
    /// dedicated bit so that a streaming walk alternates bank groups. Top
    /// chunk bits appear only as identity row bits, which is what the
    /// partitioned swap rule requires.
    pub fn default_for(
        channels: u32,
        ranks: u32,
        banks: u32,
        bank_groups: u32,
        rows: u32,
        columns: u32,
        reserved_banks: u32,
        mode: MapMode,
    ) -> Result<MappingConfig, MapError> {
        let cb = log2_exact(channels, "channels")?;
        let rb = log2_exact(ranks, "ranks")?;
        let bb = log2_exact(banks, "banks")?;
        let gb = log2_exact(bank_groups, "bank_groups")?;
        let hb = log2_exact(rows, "rows")?;
        let colb = log2_exact(columns, "columns")?;

        let col_start = BLOCK_SHIFT;
        let bank_start = col_start + colb;
        let rank_start = bank_start + bb;
        let ch_start = rank_start + rb;
        let row_start = ch_start + cb; // == system-row boundary
        let addr_bits = row_start + hb;

        let column_masks: Vec<u64> = (0..colb).map(|i| 1u64 << (col_start + i)).collect();
        let row_masks: Vec<u64> = (0..hb).map(|i| 1u64 << (row_start + i)).collect();

        // Row-bit XOR partners, consumed in order: two per channel bit and
        // one per rank bit (these become the colors), then one per bank bit.
        let mut off = 0;
        let partner = |o: u32| -> u64 {
            if o < hb {
                1u64 << (row_start + o)
            } else {
                0
            }
        };
        let mut channel_masks = Vec::new();
        for k in 0..cb {
            let m = (1u64 << (ch_start + k)) ^ partner(off) ^ partner(off + 2);
            channel_masks.push(m);
            off += 3;
        }
        let mut rank_masks = Vec::new();
        for j in 0..rb {
            let m = (1u64 << (rank_start + j)) ^ partner(off);
            rank_masks.push(m);
            off += 1;
        }
        // Bank partners must stay below the top chunk bits.
        let chunk_lo = addr_bits - bb;
        let mut bank_masks = vec![0u64; bb as usize];
        for i in 0..bb {
            let p = row_start + off + i;
            let hash = if p < chunk_lo { 1u64 << p } else { 0 };
            // Dedicated bits ascend; group bits (top of the bank index) take
            // the lowest dedicated positions so adjacent 8KB runs alternate
            // groups.
            let idx = if i < gb {
                (bb - gb + i) as usize // group bit
            } else {
                (i - gb) as usize
            };
            bank_masks[idx] = (1u64 << (bank_start + i)) ^ hash;
        }

        let cfg = MappingConfig {
            channels,
            ranks,
            banks,
            bank_groups,
            rows,
            columns,
            reserved_banks,
            mode,
            channel_masks,
            rank_masks,
            bank_masks,
            row_masks,
            column_masks,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn addr_bits(&self) -> u32 {
        BLOCK_SHIFT
            + self.columns.trailing_zeros()
            + self.banks.trailing_zeros()
            + self.ranks.trailing_zeros()
            + self.channels.trailing_zeros()
            + self.rows.trailing_zeros()
    }

    /// Total byte capacity of the mapped space.
    pub fn capacity(&self) -> u64 {
        1u64 << self.addr_bits()
    }

    /// One DRAM row in every bank of the system, the allocation unit.
    pub fn system_row_bytes(&self) -> u64 {
        (self.columns as u64) * 64 * (self.banks * self.ranks * self.channels) as u64
    }

    /// First bank index reserved for the shared region (partitioned mode).
    pub fn host_banks(&self) -> u32 {
        self.banks - self.reserved_banks
    }

    /// Byte capacity of one top-level chunk (one bank slice of the space).
    pub fn chunk_bytes(&self) -> u64 {
        self.capacity() >> self.banks.trailing_zeros()
    }

    /// Top of the host-visible physical region in partitioned mode.
    pub fn host_region_bytes(&self) -> u64 {
        match self.mode {
            MapMode::Baseline => self.capacity(),
            MapMode::Partitioned => self.chunk_bytes() * self.host_banks() as u64,
        }
    }

    fn chunk_of(&self, paddr: u64) -> u32 {
        (paddr >> (self.addr_bits() - self.banks.trailing_zeros())) as u32
    }

    pub fn bank_group_of(&self, bank: u8) -> u8 {
        let per_group = self.banks / self.bank_groups;
        bank / per_group as u8
    }

    pub fn validate(&self) -> Result<(), MapError> {
        log2_exact(self.channels, "channels")?;
        log2_exact(self.ranks, "ranks")?;
        log2_exact(self.banks, "banks")?;
        log2_exact(self.bank_groups, "bank_groups")?;
        log2_exact(self.rows, "rows")?;
        log2_exact(self.columns, "columns")?;
        if self.bank_groups > self.banks {
            return Err(MapError::BadDimension("bank_groups"));
        }
        if self.reserved_banks >= self.banks {
            return Err(MapError::BadReservation(self.reserved_banks));
        }
        let checks: [(&'static str, &Vec<u64>, u32); 5] = [
            ("channel", &self.channel_masks, self.channels.trailing_zeros()),
            ("rank", &self.rank_masks, self.ranks.trailing_zeros()),
            ("bank", &self.bank_masks, self.banks.trailing_zeros()),
            ("row", &self.row_masks, self.rows.trailing_zeros()),
            ("column", &self.column_masks, self.columns.trailing_zeros()),
        ];
        for (field, masks, want) in checks {
            if masks.len() != want as usize {
                return Err(MapError::MaskCount {
                    field,
                    got: masks.len(),
                    want: want as usize,
                });
            }
        }
        if !self.is_invertible() {
            return Err(MapError::Singular);
        }
        if self.mode == MapMode::Partitioned {
            self.validate_partition_constraint()?;
        }
        Ok(())
    }

    /// Partitioned mode requires the top chunk-index bits to appear only as
    /// identity contributions to the top row bits.
    fn validate_partition_constraint(&self) -> Result<(), MapError> {
        let bb = self.banks.trailing_zeros();
        let hb = self.rows.trailing_zeros();
        let addr_bits = self.addr_bits();
        let chunk_lo = addr_bits - bb;
        let chunk_mask: u64 = ((1u64 << bb) - 1) << chunk_lo;
        for (i, m) in self
            .channel_masks
            .iter()
            .chain(&self.rank_masks)
            .chain(&self.bank_masks)
            .chain(&self.column_masks)
            .enumerate()
        {
            if m & chunk_mask != 0 {
                let bit = (m & chunk_mask).trailing_zeros();
                let _ = i;
                return Err(MapError::ChunkBitMisused(bit));
            }
        }
        // Top row bits must be exactly the chunk bits, in order.
        for k in 0..bb as usize {
            let idx = (hb - bb) as usize + k;
            let want = 1u64 << (chunk_lo + k as u32);
            if self.row_masks[idx] != want {
                return Err(MapError::ChunkRowNotIdentity(idx));
            }
            // and no other row mask may touch chunk bits
        }
        for (idx, m) in self.row_masks.iter().enumerate() {
            if idx < (hb - bb) as usize && m & chunk_mask != 0 {
                return Err(MapError::ChunkBitMisused((m & chunk_mask).trailing_zeros()));
            }
        }
        Ok(())
    }

    fn masks_in_order(&self) -> impl Iterator<Item = &u64> {
        self.column_masks
            .iter()
            .chain(&self.bank_masks)
            .chain(&self.rank_masks)
            .chain(&self.channel_masks)
            .chain(&self.row_masks)
    }

    /// Rank check of the GF(2) matrix: the map is a bijection iff the
    /// output masks are linearly independent over the input bits.
    pub fn is_invertible(&self) -> bool {
        let mut basis: Vec<u64> = Vec::new();
        for &m in self.masks_in_order() {
            let mut v = m >> BLOCK_SHIFT;
            for b in &basis {
                v = v.min(v ^ b);
            }
            if v == 0 {
                return false;
            }
            basis.push(v);
        }
        basis.len() as u32 == self.addr_bits() - BLOCK_SHIFT
    }

    /// Applies the raw GF(2) matrix (no partition remap).
    pub fn baseline_map(&self, paddr: PhysicalAddress) -> DramAddress {
        let p = paddr.0;
        let field = |masks: &[u64]| -> u64 {
            masks
                .iter()
                .enumerate()
                .fold(0u64, |acc, (i, m)| acc | (parity(p & m) << i))
        };
        DramAddress {
            channel: field(&self.channel_masks) as u8,
            rank: field(&self.rank_masks) as u8,
            bank: field(&self.bank_masks) as u8,
            row: field(&self.row_masks) as u32,
            column: field(&self.column_masks) as u16,
        }
    }

    /// Full physical-to-DRAM translation honoring the configured mode.
    pub fn map_physical(&self, paddr: PhysicalAddress) -> Result<DramAddress, MapError> {
        if paddr.0 >= self.capacity() {
            return Err(MapError::OutOfRange(paddr.0, self.capacity()));
        }
        match self.mode {
            MapMode::Baseline => Ok(self.baseline_map(paddr)),
            MapMode::Partitioned => {
                if self.chunk_of(paddr.0) >= self.host_banks() {
                    Ok(self.shared_direct_map(paddr))
                } else {
                    let initial = self.baseline_map(paddr);
                    Ok(self.partition_remap(initial, paddr))
                }
            }
        }
    }

    /// The bank/row-MSB swap applied to host-region addresses whose hashed
    /// bank landed in a reserved bank.
    pub fn partition_remap(&self, initial: DramAddress, paddr: PhysicalAddress) -> DramAddress {
        if (initial.bank as u32) < self.host_banks() {
            return initial;
        }
        let bb = self.banks.trailing_zeros();
        let hb = self.rows.trailing_zeros();
        let chunk = self.chunk_of(paddr.0);
        let row_low_mask = (1u32 << (hb - bb)) - 1;
        let new_row = (initial.row & row_low_mask) | ((initial.bank as u32) << (hb - bb));
        DramAddress {
            bank: chunk as u8,
            row: new_row,
            ..initial
        }
    }

    /// Non-hashed layout for the reserved top chunks: the chunk index is the
    /// bank, remaining bits fill column, channel, rank, row in order.
    fn shared_direct_map(&self, paddr: PhysicalAddress) -> DramAddress {
        let mut p = paddr.0 >> BLOCK_SHIFT;
        let mut take = |bits: u32| -> u64 {
            let v = p & ((1u64 << bits) - 1);
            p >>= bits;
            v
        };
        let column = take(self.columns.trailing_zeros()) as u16;
        let channel = take(self.channels.trailing_zeros()) as u8;
        let rank = take(self.ranks.trailing_zeros()) as u8;
        let row = take(self.rows.trailing_zeros()) as u32;
        let bank = take(self.banks.trailing_zeros()) as u8;
        DramAddress {
            channel,
            rank,
            bank,
            row,
            column,
        }
    }

    fn shared_direct_unmap(&self, d: DramAddress) -> u64 {
        let mut p = 0u64;
        let mut pos = BLOCK_SHIFT;
        let mut put = |v: u64, bits: u32| {
            p |= v << pos;
            pos += bits;
        };
        put(d.column as u64, self.columns.trailing_zeros());
        put(d.channel as u64, self.channels.trailing_zeros());
        put(d.rank as u64, self.ranks.trailing_zeros());
        put(d.row as u64, self.rows.trailing_zeros());
        put(d.bank as u64, self.banks.trailing_zeros());
        p
    }

    /// Inverse translation. Exact inverse of [`Self::map_physical`].
    pub fn unmap(&self, d: DramAddress) -> Result<PhysicalAddress, MapError> {
        match self.mode {
            MapMode::Baseline => self.baseline_unmap(d),
            MapMode::Partitioned => {
                if (d.bank as u32) >= self.host_banks() {
                    return Ok(PhysicalAddress(self.shared_direct_unmap(d)));
                }
                let bb = self.banks.trailing_zeros();
                let hb = self.rows.trailing_zeros();
                let row_top = d.row >> (hb - bb);
                if row_top >= self.host_banks() {
                    // Swapped image: undo the bank/row-MSB exchange first.
                    let row_low_mask = (1u32 << (hb - bb)) - 1;
                    let initial = DramAddress {
                        bank: row_top as u8,
                        row: (d.row & row_low_mask) | ((d.bank as u32) << (hb - bb)),
                        ..d
                    };
                    self.baseline_unmap(initial)
                } else {
                    self.baseline_unmap(d)
                }
            }
        }
    }

    fn baseline_unmap(&self, d: DramAddress) -> Result<PhysicalAddress, MapError> {
        let inv = self.inverse_masks().ok_or(MapError::Singular)?;
        let out = self.pack_output(d);
        let mut p = 0u64;
        for (i, m) in inv.iter().enumerate() {
            p |= parity(out & m) << (BLOCK_SHIFT + i as u32);
        }
        Ok(PhysicalAddress(p))
    }

    fn pack_output(&self, d: DramAddress) -> u64 {
        let cb = self.columns.trailing_zeros();
        let bb = self.banks.trailing_zeros();
        let rb = self.ranks.trailing_zeros();
        let ch = self.channels.trailing_zeros();
        let mut out = d.column as u64;
        out |= (d.bank as u64) << cb;
        out |= (d.rank as u64) << (cb + bb);
        out |= (d.channel as u64) << (cb + bb + rb);
        out |= (d.row as u64) << (cb + bb + rb + ch);
        out
    }

    /// Gauss-Jordan inverse of the mapping matrix, as masks over the packed
    /// output vector. Recomputed per call; callers that unmap in bulk hold
    /// the result.
    pub fn inverse_masks(&self) -> Option<Vec<u64>> {
        let n = (self.addr_bits() - BLOCK_SHIFT) as usize;
        // rows[i]: output bit i as a mask over input bits (shifted dense).
        let mut rows: Vec<u64> = self.masks_in_order().map(|m| m >> BLOCK_SHIFT).collect();
        debug_assert_eq!(rows.len(), n);
        let mut inv: Vec<u64> = (0..n).map(|i| 1u64 << i).collect();
        // Forward elimination with partial pivoting on input-bit columns.
        let mut pivot_of_col: Vec<Option<usize>> = vec![None; n];
        let mut used = vec![false; n];
        for col in 0..n {
            let bit = 1u64 << col;
            let pivot = (0..n).find(|&r| !used[r] && rows[r] & bit != 0)?;
            used[pivot] = true;
            pivot_of_col[col] = Some(pivot);
            for r in 0..n {
                if r != pivot && rows[r] & bit != 0 {
                    rows[r] ^= rows[pivot];
                    inv[r] ^= inv[pivot];
                }
            }
        }
        // Row r now has exactly one input bit set; inv[r] tells which output
        // bits XOR to that input bit.
        let mut result = vec![0u64; n];
        for col in 0..n {
            let r = pivot_of_col[col]?;
            debug_assert_eq!(rows[r], 1u64 << col);
            result[col] = inv[r];
        }
        Some(result)
    }

    /// Physical bits above the system-row boundary that feed channel or
    /// rank masks, in ascending order. Their joint value is the color.
    pub fn color_bits(&self) -> Vec<u32> {
        let boundary = self.system_row_bytes().trailing_zeros();
        let mut mask = 0u64;
        for m in self.channel_masks.iter().chain(&self.rank_masks) {
            mask |= m;
        }
        mask &= !((1u64 << boundary) - 1);
        let mut bits = Vec::new();
        let mut b = mask;
        while b != 0 {
            bits.push(b.trailing_zeros());
            b &= b - 1;
        }
        bits
    }

    pub fn num_colors(&self) -> u32 {
        1 << self.color_bits().len()
    }

    /// Page color of an address: the packed values of the color bits.
    pub fn color_of(&self, paddr: PhysicalAddress) -> Result<Color, MapError> {
        if paddr.0 >= self.capacity() {
            return Err(MapError::OutOfRange(paddr.0, self.capacity()));
        }
        let mut c = 0u32;
        for (i, bit) in self.color_bits().iter().enumerate() {
            c |= (((paddr.0 >> bit) & 1) as u32) << i;
        }
        Ok(Color(c))
    }

    /// Human-readable matrix dump for the `map` CLI subcommand.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let fields: [(&str, &Vec<u64>); 5] = [
            ("channel", &self.channel_masks),
            ("rank", &self.rank_masks),
            ("bank", &self.bank_masks),
            ("row", &self.row_masks),
            ("column", &self.column_masks),
        ];
        for (name, masks) in fields {
            for (i, m) in masks.iter().enumerate() {
                s.push_str(&format!("map.{name}{i} = {m:#x}\n"));
            }
        }
        s.push_str(&format!(
            "map.mode = {}\nmap.reserved_banks = {}\n",
            match self.mode {
                MapMode::Baseline => "baseline",
                MapMode::Partitioned => "partitioned",
            },
            self.reserved_banks
        ));
        s
    }

    /// Applies one `map.*` key from the flat config format. Mask keys are
    /// `map.<field><index> = <hex mask>`.
    pub fn set_key(&mut self, key: &str, value: &str) -> Result<(), MapError> {
        let parse_mask = |v: &str| -> Result<u64, MapError> {
            let t = v.trim().trim_start_matches("0x");
            u64::from_str_radix(t, 16).map_err(|_| MapError::BadValue(v.to_string()))
        };
        if key == "mode" {
            self.mode = match value.trim() {
                "baseline" => MapMode::Baseline,
                "partitioned" => MapMode::Partitioned,
                other => return Err(MapError::BadValue(other.to_string())),
            };
            return Ok(());
        }
        if key == "reserved_banks" {
            self.reserved_banks = value
                .trim()
                .parse()
                .map_err(|_| MapError::BadValue(value.to_string()))?;
            return Ok(());
        }
        for (name, masks) in [
            ("channel", &mut self.channel_masks),
            ("rank", &mut self.rank_masks),
            ("bank", &mut self.bank_masks),
            ("row", &mut self.row_masks),
            ("column", &mut self.column_masks),
        ] {
            if let Some(idx) = key.strip_prefix(name) {
                let i: usize = idx.parse().map_err(|_| MapError::UnknownKey(key.into()))?;
                if i >= masks.len() {
                    return Err(MapError::UnknownKey(key.into()));
                }
                masks[i] = parse_mask(value)?;
                return Ok(());
            }
        }
        Err(MapError::UnknownKey(key.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn small_cfg(mode: MapMode) -> MappingConfig {
        MappingConfig::default_for(1, 1, 4, 2, 64, 16, 1, mode).unwrap()
    }

    fn default_cfg(mode: MapMode) -> MappingConfig {
        MappingConfig::default_for(2, 2, 16, 2, 8192, 128, 1, mode).unwrap()
    }

    /// Independent oracle: explicit bit-matrix times bit-vector over GF(2),
    /// no mask arithmetic shared with the implementation.
    fn matrix_oracle(cfg: &MappingConfig, paddr: u64) -> DramAddress {
        let bits: Vec<bool> = (0..cfg.addr_bits()).map(|b| (paddr >> b) & 1 == 1).collect();
        let apply = |masks: &[u64]| -> u64 {
            let mut v = 0u64;
            for (i, m) in masks.iter().enumerate() {
                let mut acc = false;
                for (b, set) in bits.iter().enumerate() {
                    if *set && (m >> b) & 1 == 1 {
                        acc ^= true;
                    }
                }
                if acc {
                    v |= 1 << i;
                }
            }
            v
        };
        DramAddress {
            channel: apply(&cfg.channel_masks) as u8,
            rank: apply(&cfg.rank_masks) as u8,
            bank: apply(&cfg.bank_masks) as u8,
            row: apply(&cfg.row_masks) as u32,
            column: apply(&cfg.column_masks) as u16,
        }
    }

    #[test]
    fn zero_maps_to_zero() {
        let cfg = default_cfg(MapMode::Baseline);
        let d = cfg.map_physical(PhysicalAddress(0)).unwrap();
        assert_eq!(d, DramAddress::default());
    }

    #[test]
    fn single_row_bit_flip() {
        let cfg = default_cfg(MapMode::Baseline);
        // Find a physical bit appearing in exactly one row mask and nowhere else.
        let all_other: u64 = cfg
            .channel_masks
            .iter()
            .chain(&cfg.rank_masks)
            .chain(&cfg.bank_masks)
            .chain(&cfg.column_masks)
            .fold(0, |a, m| a | m);
        let mut found = false;
        for (i, m) in cfg.row_masks.iter().enumerate() {
            let exclusive = m & !all_other;
            let others: u64 = cfg
                .row_masks
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .fold(0, |a, (_, m2)| a | m2);
            let only_here = exclusive & !others;
            if only_here != 0 {
                let bit = only_here.trailing_zeros();
                let base = cfg.map_physical(PhysicalAddress(0x12340)).unwrap();
                let flipped = cfg
                    .map_physical(PhysicalAddress(0x12340 ^ (1 << bit)))
                    .unwrap();
                assert_eq!(flipped.row ^ base.row, 1 << i);
                assert_eq!(flipped.bank, base.bank);
                assert_eq!(flipped.column, base.column);
                assert_eq!(flipped.channel, base.channel);
                assert_eq!(flipped.rank, base.rank);
                found = true;
                break;
            }
        }
        assert!(found, "default config should have an exclusive row bit");
    }

    #[test]
    fn matches_matrix_oracle() {
        let cfg = default_cfg(MapMode::Baseline);
        for paddr in [0x12345678u64, 0x0, 0xdeadbc0, 0xffffffc0, 0x77777740] {
            let p = PhysicalAddress(paddr & (cfg.capacity() - 1) & !63);
            assert_eq!(cfg.map_physical(p).unwrap(), matrix_oracle(&cfg, p.0));
        }
    }

    #[test]
    fn default_is_invertible_and_roundtrips() {
        for mode in [MapMode::Baseline, MapMode::Partitioned] {
            let cfg = default_cfg(mode);
            assert!(cfg.is_invertible());
            let mut x = 0x9e3779b97f4au64;
            for _ in 0..2000 {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1);
                let p = PhysicalAddress((x % cfg.capacity()) & !63);
                let d = cfg.map_physical(p).unwrap();
                assert_eq!(cfg.unmap(d).unwrap(), p);
            }
        }
    }

    #[test]
    fn exhaustive_small_bijection_and_containment() {
        let cfg = small_cfg(MapMode::Partitioned);
        let blocks = (cfg.capacity() / 64) as usize;
        let mut seen = vec![false; blocks];
        let host_top = cfg.host_region_bytes();
        for b in 0..blocks {
            let p = PhysicalAddress(b as u64 * 64);
            let d = cfg.map_physical(p).unwrap();
            let lin = ((((d.row as u64 * cfg.banks as u64 + d.bank as u64) * cfg.ranks as u64
                + d.rank as u64)
                * cfg.channels as u64
                + d.channel as u64)
                * cfg.columns as u64)
                + d.column as u64;
            assert!(!seen[lin as usize], "collision at {p:?}");
            seen[lin as usize] = true;
            if p.0 < host_top {
                assert!((d.bank as u32) < cfg.host_banks(), "host paddr in reserved bank");
            } else {
                assert!((d.bank as u32) >= cfg.host_banks(), "shared paddr in host bank");
            }
            assert_eq!(cfg.unmap(d).unwrap(), p);
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn remap_worked_example() {
        // 16 banks, 2 reserved (14, 15): chunk b'0011 with baseline bank 14
        // swaps to bank 3 with row MSBs b'1110.
        let cfg = MappingConfig::default_for(1, 1, 16, 4, 256, 16, 2, MapMode::Partitioned).unwrap();
        let initial = DramAddress {
            channel: 0,
            rank: 0,
            bank: 14,
            row: 0b0011_1010,
            column: 5,
        };
        // paddr with top chunk bits 0b0011; low bits arbitrary.
        let bb = 4;
        let chunk_lo = cfg.addr_bits() - bb;
        let paddr = PhysicalAddress((0b0011u64) << chunk_lo | 0x40);
        let out = cfg.partition_remap(initial, paddr);
        assert_eq!(out.bank, 3);
        assert_eq!(out.row >> 4, 0b1110);
        assert_eq!(out.row & 0xf, 0b1010);

        // Non-reserved bank passes through.
        let pass = DramAddress { bank: 5, ..initial };
        assert_eq!(cfg.partition_remap(pass, paddr), pass);
    }

    #[test]
    fn colors_span_exactly_default_range() {
        let cfg = default_cfg(MapMode::Baseline);
        assert_eq!(cfg.num_colors(), 8);
        let mut seen = [false; 8];
        let srow = cfg.system_row_bytes();
        for i in 0..(cfg.capacity() / srow) {
            let c = cfg.color_of(PhysicalAddress(i * srow)).unwrap();
            seen[c.0 as usize] = true;
        }
        assert!(seen.iter().all(|&s| s));
        // Column-offset bits never affect the color.
        let c0 = cfg.color_of(PhysicalAddress(0)).unwrap();
        let c1 = cfg.color_of(PhysicalAddress(0x1c0)).unwrap();
        assert_eq!(c0, c1);
        assert_eq!(c0, Color(0));
    }

    #[test]
    fn key_parsing_roundtrip() {
        let mut cfg = default_cfg(MapMode::Baseline);
        cfg.set_key("mode", "partitioned").unwrap();
        assert_eq!(cfg.mode, MapMode::Partitioned);
        cfg.set_key("bank0", "0x4000").unwrap();
        assert_eq!(cfg.bank_masks[0], 0x4000);
        assert!(cfg.set_key("bogus", "1").is_err());
    }
}
