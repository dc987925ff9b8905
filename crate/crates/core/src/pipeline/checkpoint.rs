//! Checkpoint directories: `manifest.txt` with `key=value` lines plus one
//! CYLT file per parameter buffer. `params` lists the buffers in layer order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::net::{Generator, Parameterized};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

use super::config::{generator_config_from_kv, generator_config_to_kv, KeyValues};
use super::io::{read_cylt, write_cylt};

pub const MANIFEST: &str = "manifest.txt";
const FORMAT: &str = "cylinpaint-checkpoint-1";

/// Writes `model` under `dir`, replacing any previous checkpoint only once
/// the new one is complete.
pub fn save_params<T: Scalar, M: Parameterized<T> + ?Sized>(
    dir: &Path,
    model: &M,
    meta: &[(String, String)],
) -> Result<()> {
    let tmp = dir.with_extension("tmp");
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    fs::create_dir_all(&tmp)?;
    let mut kv = KeyValues::default();
    kv.entries.insert("format".into(), FORMAT.into());
    for (k, v) in meta {
        kv.entries.insert(k.clone(), v.clone());
    }
    let mut order = Vec::new();
    for p in model.params() {
        let file = format!("{}.cylt", p.name);
        write_cylt(tmp.join(&file), &Tensor::from_vec(p.shape, p.data.to_vec())?)?;
        kv.entries.insert(format!("param.{}", p.name), file);
        order.push(p.name);
    }
    kv.entries.insert("params".into(), order.join(","));
    let text: String = kv.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    fs::write(tmp.join(MANIFEST), text)?;
    if dir.exists() {
        fs::remove_dir_all(dir)?;
    }
    fs::rename(&tmp, dir)?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<KeyValues> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::Config(format!("cannot read checkpoint manifest {}: {e}", path.display())))?;
    let kv = KeyValues::parse(&text)?;
    if kv.get("format") != Some(FORMAT) {
        return Err(Error::Config(format!("{} is not a {FORMAT} manifest", path.display())));
    }
    Ok(kv)
}

/// Loads parameter buffers into an already-built model; every buffer must
/// be listed with a matching shape.
pub fn load_params<T: Scalar, M: Parameterized<T> + ?Sized>(dir: &Path, kv: &KeyValues, model: &mut M) -> Result<()> {
    let expected = model.params().len();
    let listed = kv.entries.keys().filter(|k| k.starts_with("param.")).count();
    if listed != expected {
        return Err(Error::Config(format!("checkpoint lists {listed} parameters, architecture has {expected}")));
    }
    if let Some(order) = kv.get("params") {
        let names: Vec<String> = model.params().into_iter().map(|p| p.name).collect();
        if order.split(',').map(str::trim).ne(names.iter().map(String::as_str)) {
            return Err(Error::Config("checkpoint parameter order differs from the architecture".into()));
        }
    }
    for p in model.params_mut() {
        let file = kv
            .get(&format!("param.{}", p.name))
            .ok_or_else(|| Error::Config(format!("checkpoint has no parameter {}", p.name)))?;
        let t: Tensor<T> = read_cylt(dir.join(file))?;
        if t.shape() != p.shape {
            return Err(Error::Config(format!("{}: checkpoint shape {:?}, architecture {:?}", p.name, t.shape(), p.shape)));
        }
        p.data.copy_from_slice(t.data());
    }
    Ok(())
}

pub fn save_generator<T: Scalar>(dir: &Path, gen: &Generator<T>, extra: &[(String, String)]) -> Result<()> {
    let mut meta = vec![("kind".to_string(), "generator".to_string())];
    meta.extend(generator_config_to_kv(&gen.config));
    meta.extend_from_slice(extra);
    save_params(dir, gen, &meta)
}

/// Rebuilds a generator from the architecture recorded in the manifest.
pub fn load_generator<T: Scalar>(dir: &Path) -> Result<(Generator<T>, KeyValues)> {
    let kv = read_manifest(dir)?;
    if kv.get("kind") != Some("generator") {
        return Err(Error::Config(format!("{} does not hold a generator", dir.display())));
    }
    let cfg = generator_config_from_kv(&kv)?;
    let mut gen = Generator::new(cfg, &mut Rng::new(0))?;
    load_params(dir, &kv, &mut gen)?;
    Ok((gen, kv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::GeneratorConfig;

    #[test]
    fn generator_round_trip_and_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = GeneratorConfig { channels: vec![4, 8], ..Default::default() };
        let gen = Generator::<f32>::new(cfg.clone(), &mut Rng::new(3)).unwrap();
        let path = dir.path().join("ckpt");
        save_generator(&path, &gen, &[("step".into(), "5".into())]).unwrap();
        let (back, kv) = load_generator::<f32>(&path).unwrap();
        assert_eq!(kv.get("step"), Some("5"));
        assert_eq!(back.config, gen.config);
        for (a, b) in back.params().iter().zip(gen.params().iter()) {
            assert_eq!(a.data, b.data);
        }
        // overwriting works and a wrong architecture is a configuration error
        save_generator(&path, &gen, &[]).unwrap();
        let other = Generator::<f32>::new(GeneratorConfig { channels: vec![4, 6], ..cfg }, &mut Rng::new(3)).unwrap();
        let mut other = other;
        let kv = read_manifest(&path).unwrap();
        assert!(matches!(load_params(&path, &kv, &mut other), Err(Error::Config(_))));
    }
}
