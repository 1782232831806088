//! Synthetic phantoms, continuous multi-slice volumes, quintuplet assembly and
//! tensor file I/O.

pub mod phantom;
pub mod tns;
pub mod volume;

pub use phantom::{shepp_logan, Ellipse, ImageSlice};
pub use tns::{read_tensor, read_tensor_any, write_tensor, AnyTensor};
pub use volume::{gen_continuous_volume, make_quintuplet_pairs, make_quintuplets, Quintuplet, Volume};
