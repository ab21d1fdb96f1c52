use std::path::Path;
use std::sync::Arc;

use rand::seq::{index, IndexedRandom};
use rand::Rng;

use super::{EnvKind, Environment, RoundDraw};
use crate::bandit::ContextMatrix;
use crate::error::{BanditError, Result};
use crate::rng::SimRng;

pub const ATTRIBUTE_COUNT: usize = 22;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MushroomRecord {
    pub edible: bool,
    pub attributes: [u8; ATTRIBUTE_COUNT],
}

/// Parsed mushroom records with their one-hot encoding tables.
#[derive(Debug, Clone)]
pub struct MushroomPool {
    source: String,
    records: Vec<MushroomRecord>,
    /// Per attribute, categories in first-seen order.
    categories: Vec<Vec<u8>>,
    offsets: Vec<usize>,
    dim: usize,
    encoded: Vec<f64>,
    edible: Vec<usize>,
    poisonous: Vec<usize>,
}

pub fn parse_mushroom_csv(path: &Path) -> Result<MushroomPool> {
    let text = std::fs::read_to_string(path).map_err(|e| BanditError::io(path, e))?;
    parse_mushroom_str(&text, &path.display().to_string())
}

/// Parses agaricus-lepiota text; `source` names it in error messages.
pub fn parse_mushroom_str(text: &str, source: &str) -> Result<MushroomPool> {
    let parse_err = |line: usize, message: String| BanditError::Parse {
        path: source.to_string(),
        line,
        message,
    };
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != ATTRIBUTE_COUNT + 1 {
            return Err(parse_err(
                line_no,
                format!(
                    "expected {} fields, found {}",
                    ATTRIBUTE_COUNT + 1,
                    fields.len()
                ),
            ));
        }
        let mut letters = [0u8; ATTRIBUTE_COUNT + 1];
        for (slot, field) in letters.iter_mut().zip(&fields) {
            let field = field.trim();
            match field.as_bytes() {
                [b] if b.is_ascii_graphic() => *slot = *b,
                _ => {
                    return Err(parse_err(
                        line_no,
                        format!("field {field:?} is not a single character"),
                    ))
                }
            }
        }
        let edible = match letters[0] {
            b'e' => true,
            b'p' => false,
            other => {
                return Err(parse_err(
                    line_no,
                    format!("label must be 'e' or 'p', found {:?}", other as char),
                ))
            }
        };
        let mut attributes = [0u8; ATTRIBUTE_COUNT];
        attributes.copy_from_slice(&letters[1..]);
        records.push(MushroomRecord { edible, attributes });
    }
    if records.is_empty() {
        return Err(BanditError::Format {
            path: source.to_string(),
            message: "no records".into(),
        });
    }
    MushroomPool::from_records(source.to_string(), records)
}

impl MushroomPool {
    pub fn from_records(source: String, records: Vec<MushroomRecord>) -> Result<Self> {
        let mut categories: Vec<Vec<u8>> = vec![Vec::new(); ATTRIBUTE_COUNT];
        for r in &records {
            for (table, &c) in categories.iter_mut().zip(&r.attributes) {
                if !table.contains(&c) {
                    table.push(c);
                }
            }
        }
        let mut offsets = Vec::with_capacity(ATTRIBUTE_COUNT);
        let mut dim = 0;
        for table in &categories {
            offsets.push(dim);
            dim += table.len();
        }
        let mut pool = Self {
            source,
            records: Vec::new(),
            categories,
            offsets,
            dim,
            encoded: Vec::with_capacity(records.len() * dim),
            edible: Vec::new(),
            poisonous: Vec::new(),
        };
        for (i, r) in records.iter().enumerate() {
            let v = pool.encode_one_hot(r)?;
            pool.encoded.extend_from_slice(&v);
            if r.edible {
                pool.edible.push(i);
            } else {
                pool.poisonous.push(i);
            }
        }
        pool.records = records;
        Ok(pool)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn records(&self) -> &[MushroomRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn categories(&self, attribute: usize) -> &[u8] {
        &self.categories[attribute]
    }

    /// Length of an encoded context: the total number of categories.
    pub fn encoded_dim(&self) -> usize {
        self.dim
    }

    pub fn edible_count(&self) -> usize {
        self.edible.len()
    }

    /// Concatenated one-hot blocks, one per attribute. The label is not encoded.
    pub fn encode_one_hot(&self, record: &MushroomRecord) -> Result<Vec<f64>> {
        let mut v = vec![0.0; self.dim];
        for (a, &c) in record.attributes.iter().enumerate() {
            let pos =
                self.categories[a]
                    .iter()
                    .position(|&x| x == c)
                    .ok_or(BanditError::Encoding {
                        attribute: a,
                        value: c as char,
                    })?;
            v[self.offsets[a] + pos] = 1.0;
        }
        Ok(v)
    }

    pub fn context(&self, index: usize) -> &[f64] {
        &self.encoded[index * self.dim..(index + 1) * self.dim]
    }
}

/// Reward 1 for an edible mushroom, 0 for a poisonous one, plus scaled noise.
#[derive(Debug, Clone)]
pub struct MushroomEnv {
    pool: Arc<MushroomPool>,
    n: usize,
    k: usize,
    noise_scale: f64,
    exact_balance: bool,
}

impl MushroomEnv {
    pub fn new(pool: Arc<MushroomPool>, n: usize, k: usize, noise_scale: f64) -> Result<Self> {
        if pool.edible.is_empty() || pool.poisonous.is_empty() {
            return Err(BanditError::Consistency(format!(
                "{}: the pool needs both edible and poisonous records",
                pool.source
            )));
        }
        if n == 0 || k == 0 || k > n {
            return Err(BanditError::InvalidConfig(format!(
                "K ≤ n required (K = {k}, n = {n})"
            )));
        }
        Ok(Self {
            pool,
            n,
            k,
            noise_scale,
            exact_balance: false,
        })
    }

    /// Exactly K edible slots per round (positions uniform) instead of
    /// independent Bernoulli(K/n) slots.
    pub fn set_exact_balance(&mut self, on: bool) {
        self.exact_balance = on;
    }

    pub fn pool(&self) -> &MushroomPool {
        &self.pool
    }
}

impl Environment for MushroomEnv {
    fn kind(&self) -> EnvKind {
        EnvKind::Mushroom
    }

    fn arm_count(&self) -> usize {
        self.n
    }

    fn context_dim(&self) -> usize {
        self.pool.dim
    }

    fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    fn draw_round(&mut self, t: usize, rng: &mut SimRng) -> Result<RoundDraw> {
        let edible: Vec<bool> = if self.exact_balance {
            let mut flags = vec![false; self.n];
            for i in index::sample(rng, self.n, self.k) {
                flags[i] = true;
            }
            flags
        } else {
            let p = self.k as f64 / self.n as f64;
            (0..self.n).map(|_| rng.random::<f64>() < p).collect()
        };
        let dim = self.pool.dim;
        let mut data = Vec::with_capacity(self.n * dim);
        let mut means = Vec::with_capacity(self.n);
        for &e in &edible {
            let class = if e {
                &self.pool.edible
            } else {
                &self.pool.poisonous
            };
            let record = *class.choose(rng).expect("non-empty class");
            data.extend_from_slice(self.pool.context(record));
            means.push(if e { 1.0 } else { 0.0 });
        }
        RoundDraw::new(
            ContextMatrix::from_flat(self.n, dim, data, t)?,
            means,
            self.noise_scale,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    const SAMPLE: &str = "\
p,x,s,n,t,p,f,c,n,k,e,e,s,s,w,w,p,w,o,p,k,s,u
e,x,s,y,t,a,f,c,b,k,e,c,s,s,w,w,p,w,o,p,n,n,g
e,b,s,w,t,l,f,c,b,n,e,c,s,s,w,w,p,w,o,p,n,n,m
p,x,y,w,t,p,f,c,n,n,e,e,s,s,w,w,p,w,o,p,k,s,u
";

    fn sample_pool() -> Arc<MushroomPool> {
        Arc::new(parse_mushroom_str(SAMPLE, "sample").unwrap())
    }

    #[test]
    fn parses_labels_and_tables() {
        let pool = sample_pool();
        assert_eq!(pool.len(), 4);
        assert!(!pool.records()[0].edible);
        assert!(pool.records()[1].edible);
        assert_eq!(pool.categories(0), b"xb");
        assert_eq!(pool.categories(2), b"nyw");
    }

    #[test]
    fn wrong_arity_reports_line() {
        let text = format!("{SAMPLE}e,x,s,y,t,a,f,c,b,k\n");
        match parse_mushroom_str(&text, "f.csv") {
            Err(BanditError::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_label_and_empty_input_fail() {
        let text = SAMPLE.replacen("p,x,s,n", "q,x,s,n", 1);
        assert!(matches!(
            parse_mushroom_str(&text, "f"),
            Err(BanditError::Parse { line: 1, .. })
        ));
        assert!(parse_mushroom_str("\n\n", "f").is_err());
    }

    #[test]
    fn missing_marker_is_a_category() {
        let text = SAMPLE.replacen(",e,e,s,s,", ",e,?,s,s,", 1);
        let pool = parse_mushroom_str(&text, "f").unwrap();
        assert!(pool.categories(10).contains(&b'?'));
    }

    #[test]
    fn one_hot_has_one_bit_per_attribute() {
        let pool = sample_pool();
        for i in 0..pool.len() {
            let v = pool.context(i);
            assert_eq!(v.iter().filter(|x| **x == 1.0).count(), ATTRIBUTE_COUNT);
            assert!(v.iter().all(|x| *x == 0.0 || *x == 1.0));
        }
        let a = &pool.records()[1];
        let mut b = a.clone();
        b.attributes[0] = b'b';
        let diff = pool
            .encode_one_hot(a)
            .unwrap()
            .iter()
            .zip(pool.encode_one_hot(&b).unwrap())
            .filter(|(x, y)| **x != *y)
            .count();
        assert_eq!(diff, 2);
    }

    #[test]
    fn unseen_category_names_attribute() {
        let pool = sample_pool();
        let mut r = pool.records()[0].clone();
        r.attributes[5] = b'z';
        assert!(matches!(
            pool.encode_one_hot(&r),
            Err(BanditError::Encoding {
                attribute: 5,
                value: 'z'
            })
        ));
    }

    #[test]
    fn zero_noise_edible_pick_pays_one() {
        let mut env = MushroomEnv::new(sample_pool(), 6, 3, 0.0).unwrap();
        let mut rng = stream(1, 0);
        let draw = env.draw_round(1, &mut rng).unwrap();
        for (arm, &m) in draw.true_means.iter().enumerate() {
            assert_eq!(draw.observe(arm, &mut rng), m);
        }
    }

    #[test]
    fn exact_balance_fixes_edible_count() {
        let mut env = MushroomEnv::new(sample_pool(), 10, 4, 0.5).unwrap();
        env.set_exact_balance(true);
        let mut rng = stream(2, 0);
        for t in 1..50 {
            let draw = env.draw_round(t, &mut rng).unwrap();
            assert_eq!(draw.true_means.iter().sum::<f64>(), 4.0);
        }
    }

    #[test]
    fn draw_is_deterministic_given_rng() {
        let mut a = MushroomEnv::new(sample_pool(), 8, 2, 0.5).unwrap();
        let mut b = a.clone();
        let da = a.draw_round(3, &mut stream(9, 1)).unwrap();
        let db = b.draw_round(3, &mut stream(9, 1)).unwrap();
        assert_eq!(da.true_means, db.true_means);
        assert_eq!(da.contexts, db.contexts);
    }

    #[test]
    fn single_class_pool_rejected() {
        let text: String = SAMPLE
            .lines()
            .skip(1)
            .take(2)
            .map(|l| format!("{l}\n"))
            .collect();
        let pool = Arc::new(parse_mushroom_str(&text, "f").unwrap());
        assert!(matches!(
            MushroomEnv::new(pool, 4, 2, 0.5),
            Err(BanditError::Consistency(_))
        ));
    }
}
