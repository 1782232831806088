//! Weight archives: a directory holding `manifest.txt` (one parameter name per
//! line, in network order) and one TNS file per parameter or buffer.

use std::fs;
use std::path::Path;

use super::network::Network;
use crate::data::tns::{read_tensor, write_tensor};
use crate::error::{arg_err, Result};
use crate::scalar::Scalar;

pub const MANIFEST: &str = "manifest.txt";

pub fn save_network<T: Scalar>(dir: impl AsRef<Path>, net: &Network<T>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    for p in net.params() {
        write_tensor(dir.join(format!("{}.tns", p.name)), &p.tensor)?;
        manifest.push_str(&p.name);
        manifest.push('\n');
    }
    fs::write(dir.join(MANIFEST), manifest)?;
    Ok(())
}

/// Loads every tensor listed in the manifest into `net`. The manifest must
/// name exactly the network's parameters, in order.
pub fn load_network<T: Scalar>(dir: impl AsRef<Path>, net: &mut Network<T>) -> Result<()> {
    let dir = dir.as_ref();
    let manifest = fs::read_to_string(dir.join(MANIFEST))?;
    let names: Vec<&str> = manifest.lines().filter(|l| !l.is_empty()).collect();
    let expected: Vec<String> = net.params().iter().map(|p| p.name.clone()).collect();
    if names.len() != expected.len() || names.iter().zip(&expected).any(|(a, b)| a != b) {
        return arg_err(format!(
            "archive {} does not match network {} ({} vs {} entries)",
            dir.display(),
            net.spec().name,
            names.len(),
            expected.len()
        ));
    }
    for name in names {
        let t = read_tensor::<T>(dir.join(format!("{name}.tns")))?;
        net.set_param(name, t)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::spec::{build_discriminator, ScaleProfile};

    #[test]
    fn archive_round_trip() {
        let p = ScaleProfile::new(0.125, (32, 32)).unwrap();
        let a = Network::<f32>::new(build_discriminator(&p).unwrap(), 11).unwrap();
        let mut b = Network::<f32>::new(build_discriminator(&p).unwrap(), 12).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_network(dir.path(), &a).unwrap();
        load_network(dir.path(), &mut b).unwrap();
        for (x, y) in a.params().iter().zip(b.params()) {
            assert_eq!(x.tensor, y.tensor);
        }
    }
}
