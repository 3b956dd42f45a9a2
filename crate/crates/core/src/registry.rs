//! Name-keyed registries of interchangeable strategies.
//!
//! Every family of algorithms in the crate (measure families, ensemble
//! samplers, γ-sources, target laws) is exposed as a trait object
//! registered under a stable name, so the CLI and config files can select
//! a variant at runtime.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

type Factory<T> = Box<dyn Fn(&[f64]) -> Result<Box<T>> + Send + Sync>;

pub struct Registry<T: ?Sized> {
    kind: &'static str,
    entries: BTreeMap<&'static str, Factory<T>>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self { kind, entries: BTreeMap::new() }
    }

    pub fn register<F>(&mut self, name: &'static str, factory: F) -> &mut Self
    where
        F: Fn(&[f64]) -> Result<Box<T>> + Send + Sync + 'static,
    {
        self.entries.insert(name, Box::new(factory));
        self
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    /// Instantiates the strategy registered as `name` with numeric parameters.
    pub fn build(&self, name: &str, params: &[f64]) -> Result<Box<T>> {
        match self.entries.get(name) {
            Some(factory) => factory(params),
            None => Err(Error::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                available: self.names().join(", "),
            }),
        }
    }

    /// Parses `name` or `name:p1,p2,...` and builds the strategy.
    pub fn parse(&self, spec: &str) -> Result<Box<T>> {
        let (name, params) = split_spec(spec)?;
        self.build(name, &params)
    }
}

/// Splits `name:1,2.5` into the name and its numeric parameters.
pub fn split_spec(spec: &str) -> Result<(&str, Vec<f64>)> {
    let spec = spec.trim();
    let (name, rest) = match spec.split_once(':') {
        Some((n, r)) => (n.trim(), r.trim()),
        None => (spec, ""),
    };
    if name.is_empty() {
        return Err(Error::invalid(format!("empty strategy name in '{spec}'")));
    }
    let params = if rest.is_empty() {
        Vec::new()
    } else {
        rest.split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::invalid(format!("bad numeric parameter '{p}' in '{spec}'")))
            })
            .collect::<Result<Vec<_>>>()?
    };
    Ok((name, params))
}

pub(crate) fn expect_params(name: &str, params: &[f64], n: usize) -> Result<()> {
    if params.len() != n {
        return Err(Error::invalid(format!(
            "'{name}' takes {n} parameter(s), got {}",
            params.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    trait Shape {
        fn area(&self) -> f64;
    }
    struct Square(f64);
    impl Shape for Square {
        fn area(&self) -> f64 {
            self.0 * self.0
        }
    }

    #[test]
    fn parse_and_build() {
        let mut reg: Registry<dyn Shape> = Registry::new("shape");
        reg.register("square", |p| {
            expect_params("square", p, 1)?;
            Ok(Box::new(Square(p[0])))
        });
        assert_eq!(reg.parse("square:3").unwrap().area(), 9.0);
        assert!(reg.parse("square").is_err());
        let err = reg.parse("circle:1").err().unwrap();
        assert!(err.to_string().contains("available: square"));
    }

    #[test]
    fn split_spec_forms() {
        assert_eq!(split_spec("point").unwrap(), ("point", vec![]));
        assert_eq!(split_spec("uniform:0, 1").unwrap(), ("uniform", vec![0.0, 1.0]));
        assert!(split_spec("uniform:a").is_err());
        assert!(split_spec(":1").is_err());
    }
}
