use std::fmt;

/// Command failure, classified by the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Numeric(String),
    Io(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Numeric(_) => 2,
            Failure::Io(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage: {m}"),
            Failure::Numeric(m) => write!(f, "numeric failure: {m}"),
            Failure::Io(m) => write!(f, "io failure: {m}"),
        }
    }
}

impl From<latgeo::Error> for Failure {
    fn from(e: latgeo::Error) -> Self {
        use latgeo::Error as E;
        let m = e.to_string();
        match e {
            E::NonFinite(_) | E::BrokenMetric(_) => Failure::Numeric(m),
            E::Io(_) | E::Json(_) | E::Format(_) => Failure::Io(m),
            _ => Failure::Usage(m),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn library_errors_map_to_exit_codes() {
        assert_eq!(Failure::from(latgeo::Error::NonFinite("x".into())).code(), 2);
        assert_eq!(Failure::from(latgeo::Error::InvalidConfig("x".into())).code(), 1);
        assert_eq!(Failure::from(latgeo::Error::Format("x".into())).code(), 3);
        assert_eq!(Failure::from(std::io::Error::other("x")).code(), 3);
    }
}
