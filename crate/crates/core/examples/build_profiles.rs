//! Regenerate the bundled trigram profiles from the training texts.
//!
//!     cargo run -p babelbot-core --example build_profiles

use std::path::Path;

use babelbot_core::langid::LanguageProfile;

fn main() -> std::io::Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/langid");
    let out = root.join("profiles");
    std::fs::create_dir_all(&out)?;
    for entry in std::fs::read_dir(root.join("train"))? {
        let path = entry?.path();
        let Some(code) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        let corpus = std::fs::read_to_string(&path)?;
        let profile = LanguageProfile::train(code, &corpus);
        std::fs::write(out.join(format!("{code}.tsv")), profile.to_file_string())?;
        println!(
            "{code}: {} trigrams, {:?}",
            profile.size(),
            profile.script()
        );
    }
    Ok(())
}
