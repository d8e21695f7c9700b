use super::Script;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LanguageInfo {
    pub code: &'static str,
    pub name: &'static str,
    pub family: &'static str,
    pub script: Script,
    /// Whether numbers are written with a decimal comma.
    pub decimal_comma: bool,
}

const fn info(
    code: &'static str,
    name: &'static str,
    family: &'static str,
    script: Script,
    decimal_comma: bool,
) -> LanguageInfo {
    LanguageInfo {
        code,
        name,
        family,
        script,
        decimal_comma,
    }
}

pub const KNOWN_LANGUAGES: &[LanguageInfo] = &[
    info("ar", "Arabic", "Afro-Asiatic", Script::Arabic, false),
    info("de", "German", "Indo-European", Script::Latin, true),
    info("en", "English", "Indo-European", Script::Latin, false),
    info("es", "Spanish", "Indo-European", Script::Latin, true),
    info("fr", "French", "Indo-European", Script::Latin, true),
    info("hi", "Hindi", "Indo-European", Script::Devanagari, false),
    info("ig", "Igbo", "Niger-Congo", Script::Latin, false),
    info("it", "Italian", "Indo-European", Script::Latin, true),
    info("pcm", "Nigerian Pidgin", "Creole", Script::Latin, false),
    info("pt", "Portuguese", "Indo-European", Script::Latin, true),
    info("ru", "Russian", "Indo-European", Script::Cyrillic, true),
    info("sw", "Swahili", "Niger-Congo", Script::Latin, false),
    info("yo", "Yoruba", "Niger-Congo", Script::Latin, false),
    info("zh", "Chinese", "Sino-Tibetan", Script::Han, false),
];

pub fn language_info(code: &str) -> Option<&'static LanguageInfo> {
    KNOWN_LANGUAGES.iter().find(|l| l.code == code)
}
