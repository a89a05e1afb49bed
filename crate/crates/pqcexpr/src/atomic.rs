use std::ffi::OsString;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

/// Replaces `path` with `contents` through a sibling temporary file, creating
/// parent directories as needed.
pub fn write_atomic(path: &Path, contents: &str) -> io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut name = OsString::from(path.as_os_str());
    name.push(".tmp");
    let tmp = PathBuf::from(name);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)
}
