//! Debug dumps: one raw little-endian file per core plus a text manifest.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{TensorTrain, TtOperator};
use crate::error::{Error, Result};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.display().to_string(), source }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::File::create(path).and_then(|mut f| f.write_all(bytes)).map_err(io_err(path))
}

/// Writes `core_XXX.bin` (interleaved re/im f64, row-major) and `manifest.txt`.
pub fn dump_state(psi: &TensorTrain, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut manifest = format!("kind = state\nsites = {}\nranks = {:?}\n", psi.n_sites(), psi.ranks());
    for (i, core) in psi.cores().iter().enumerate() {
        let name = format!("core_{i:03}.bin");
        let bytes: Vec<u8> = core
            .iter()
            .flat_map(|z| z.re.to_le_bytes().into_iter().chain(z.im.to_le_bytes()))
            .collect();
        write_file(&dir.join(&name), &bytes)?;
        manifest.push_str(&format!("{name} complex128 {:?}\n", core.dim()));
    }
    write_file(&dir.join("manifest.txt"), manifest.as_bytes())
}

/// Writes `core_XXX.bin` (f64, row-major) and `manifest.txt`.
pub fn dump_operator(op: &TtOperator, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut manifest =
        format!("kind = operator\nsites = {}\nranks = {:?}\n", op.n_sites(), op.ranks());
    for (i, core) in op.cores().iter().enumerate() {
        let name = format!("core_{i:03}.bin");
        let bytes: Vec<u8> = core.iter().flat_map(|x| x.to_le_bytes()).collect();
        write_file(&dir.join(&name), &bytes)?;
        manifest.push_str(&format!("{name} float64 {:?}\n", core.dim()));
    }
    write_file(&dir.join("manifest.txt"), manifest.as_bytes())
}
