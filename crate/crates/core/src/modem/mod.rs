//! Symbol-domain machinery: Gray QAM, eigenwave multiplexing (MEM and
//! zero-padded MEM) and the OFDM/OTFS reference modems.

mod baseline;
mod mem;
mod qam;

pub(crate) use baseline::check_grid;
pub use baseline::{
    ofdm_baseline, ofdm_receive, ofdm_transmit, otfs_receive, otfs_tfst_baseline, otfs_transmit,
    BitErrors,
};
pub use mem::{
    equalize, mem_demodulate, mem_modulate, zero_pad_count, zp_mem, Equalizer, MemFrame,
};
pub use qam::{
    awgn_ber, awgn_ser, count_bit_errors, q_function, qam_demap, qam_map, random_bits,
    Constellation, SymbolFrame,
};
