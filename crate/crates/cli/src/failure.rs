use anyhow::Error;

/// A command failure and the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    Usage(Error),
    Data(Error),
    Provider(Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Provider(_) => 3,
        }
    }

    pub fn error(&self) -> &Error {
        match self {
            Failure::Usage(e) | Failure::Data(e) | Failure::Provider(e) => e,
        }
    }
}

pub trait Classify<T> {
    fn usage(self) -> Result<T, Failure>;
    fn data(self) -> Result<T, Failure>;
}

impl<T, E: Into<Error>> Classify<T> for Result<T, E> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Usage(e.into()))
    }

    fn data(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Data(e.into()))
    }
}
