//! Flat `key = value` config files and the option groups they fill.
//!
//! Every long flag has a config key of the same name. Flags given on the
//! command line win over the file; anything left unset takes its default.
//! After resolution each group can write itself back out, which is the
//! effective-config snapshot saved next to a run's outputs.

use crate::CliError;
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    /// Blank lines and lines starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected `key = value`", i + 1)))?;
            let key = k.trim().to_string();
            if values.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(CliError::Usage(format!("config line {}: duplicate key `{key}`", i + 1)));
            }
        }
        Ok(ConfigFile { values })
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        ConfigFile::parse(&text)
    }

    pub(crate) fn take(&mut self, key: &str) -> Option<String> {
        self.values.remove(key)
    }

    /// Keys no option group consumed.
    pub fn leftover(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }
}

pub(crate) fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T, CliError>
where
    T::Err: fmt::Display,
{
    raw.parse()
        .map_err(|e| CliError::Usage(format!("config key `{key}`: {e}")))
}

/// Comma-separated list value.
#[derive(Debug, Clone, PartialEq)]
pub struct List<T>(pub Vec<T>);

impl<T: FromStr> FromStr for List<T>
where
    T::Err: fmt::Display,
{
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|p| p.trim().parse::<T>().map_err(|e| format!("`{p}`: {e}")))
            .collect::<Result<Vec<_>, _>>()
            .map(List)
    }
}

impl<T: fmt::Display> fmt::Display for List<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Spatial input size, `HxW` or a single side length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dim(pub usize, pub usize);

impl FromStr for Dim {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let side = |p: &str| p.trim().parse::<usize>().map_err(|e| format!("bad size `{s}`: {e}"));
        match s.split_once('x') {
            Some((h, w)) => Ok(Dim(side(h)?, side(w)?)),
            None => side(s).map(|n| Dim(n, n)),
        }
    }
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.0, self.1)
    }
}

pub type Snapshot = Vec<(&'static str, String)>;

/// Declares an option group: every field is an optional long flag with a
/// matching config key and an optional default.
macro_rules! options {
    ($(#[$meta:meta])* $name:ident {
        $( $(#[doc = $doc:literal])* $field:ident : $ty:ty = $key:literal, $default:expr; )*
    }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Default, clap::Args)]
        pub struct $name {
            $(
                $(#[doc = $doc])*
                #[arg(long = $key)]
                pub $field: Option<$ty>,
            )*
        }

        impl $name {
            /// Fills unset fields from the config file, then from defaults.
            pub fn resolve(&mut self, cfg: &mut ConfigFile) -> Result<(), CliError> {
                $(
                    if let Some(raw) = cfg.take($key) {
                        if self.$field.is_none() {
                            self.$field = Some($crate::config::parse_value::<$ty>($key, &raw)?);
                        }
                    }
                    if self.$field.is_none() {
                        self.$field = $default;
                    }
                )*
                Ok(())
            }

            pub fn snapshot(&self, out: &mut Snapshot) {
                $(
                    if let Some(v) = &self.$field {
                        out.push(($key, v.to_string()));
                    }
                )*
            }
        }
    };
}

pub(crate) use options;

pub fn write_snapshot(path: &Path, command: &str, entries: &Snapshot) -> Result<(), CliError> {
    let mut text = format!("# effective configuration for `swapnas {command}`\n");
    for (k, v) in entries {
        text.push_str(&format!("{k} = {v}\n"));
    }
    std::fs::write(path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    options!(Demo {
        /// A count.
        count: usize = "count", Some(3);
        name: String = "name", None;
        sizes: List<usize> = "sizes", Some(List(vec![8, 16]));
    });

    #[test]
    fn parse_file() {
        let c = ConfigFile::parse("# comment\n\ncount = 5\nname=abc \n").unwrap();
        assert_eq!(c.values["count"], "5");
        assert_eq!(c.values["name"], "abc");
        assert!(ConfigFile::parse("novalue\n").is_err());
        assert!(ConfigFile::parse("a=1\na=2\n").is_err());
    }

    #[test]
    fn flags_override_file_and_defaults_fill_the_rest() {
        let mut c = ConfigFile::parse("count = 5\nsizes = 1,2\nother = x\n").unwrap();
        let mut d = Demo {
            count: Some(7),
            ..Default::default()
        };
        d.resolve(&mut c).unwrap();
        assert_eq!(d.count, Some(7));
        assert_eq!(d.sizes, Some(List(vec![1, 2])));
        assert_eq!(d.name, None);
        assert_eq!(c.leftover().collect::<Vec<_>>(), vec!["other"]);
        let mut snap = Vec::new();
        d.snapshot(&mut snap);
        assert_eq!(snap, vec![("count", "7".to_string()), ("sizes", "1,2".to_string())]);
    }

    #[test]
    fn bad_value_is_a_usage_error() {
        let mut c = ConfigFile::parse("count = many\n").unwrap();
        assert!(matches!(Demo::default().resolve(&mut c), Err(CliError::Usage(_))));
    }

    #[test]
    fn dims_and_lists() {
        assert_eq!("16x8".parse::<Dim>().unwrap(), Dim(16, 8));
        assert_eq!("32".parse::<Dim>().unwrap(), Dim(32, 32));
        assert!("x".parse::<Dim>().is_err());
        assert_eq!("4, 8".parse::<List<usize>>().unwrap(), List(vec![4, 8]));
        assert_eq!(List(vec![Dim(3, 3), Dim(8, 8)]).to_string(), "3x3,8x8");
    }
}
