use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

/// Default language set.
pub const DEFAULT_LANGUAGES: [&str; 10] = ["nl", "fr", "en", "de", "es", "it", "pt", "sv", "da", "pl"];

const SEED_TEXT: [(&str, &str); 10] = [
    (
        "nl",
        "Welke stad is de hoofdstad van het land? De leerlingen moeten het juiste antwoord kiezen. \
         Waarom is water belangrijk voor planten en dieren? Het klimaat wordt warmer door de uitstoot van gassen. \
         Hoeveel jaren duurde de oorlog in Europa? Vul het ontbrekende woord in de zin in. \
         De groepen voedingsstoffen zijn eiwitten, vetten en koolhydraten; ze leveren energie aan het lichaam. \
         Welke bewering over de rivier is juist? Het boek werd geschreven door een bekende schrijver uit Vlaanderen.",
    ),
    (
        "fr",
        "Quelle est la capitale de ce pays ? Les élèves doivent choisir la bonne réponse. \
         Pourquoi l'eau est-elle importante pour les plantes et les animaux ? Le climat devient plus chaud. \
         Combien d'années a duré la guerre en Europe ? Complétez la phrase avec le mot qui manque. \
         Les groupes d'aliments fournissent de l'énergie au corps. Quelle affirmation sur le fleuve est correcte ?",
    ),
    (
        "en",
        "Which city is the capital of the country? The students have to choose the correct answer. \
         Why is water important for plants and animals? The climate is getting warmer because of emissions. \
         How many years did the war in Europe last? Fill in the missing word in the sentence. \
         Which inhabitants are not happy with the plans of the river? The book was written by a famous author.",
    ),
    (
        "de",
        "Welche Stadt ist die Hauptstadt des Landes? Die Schüler müssen die richtige Antwort wählen. \
         Warum ist Wasser wichtig für Pflanzen und Tiere? Das Klima wird wärmer wegen der Abgase. \
         Wie viele Jahre dauerte der Krieg in Europa? Ergänzen Sie das fehlende Wort im Satz. \
         Welche Aussage über den Fluss ist richtig? Das Buch wurde von einem bekannten Schriftsteller geschrieben.",
    ),
    (
        "es",
        "¿Cuál es la capital del país? Los alumnos tienen que elegir la respuesta correcta. \
         ¿Por qué el agua es importante para las plantas y los animales? El clima se está calentando. \
         ¿Cuántos años duró la guerra en Europa? Complete la frase con la palabra que falta. \
         ¿Qué afirmación sobre el río es correcta? El libro fue escrito por un autor famoso.",
    ),
    (
        "it",
        "Qual è la capitale del paese? Gli studenti devono scegliere la risposta giusta. \
         Perché l'acqua è importante per le piante e gli animali? Il clima sta diventando più caldo. \
         Quanti anni è durata la guerra in Europa? Completa la frase con la parola mancante. \
         Quale affermazione sul fiume è corretta? Il libro è stato scritto da un autore famoso.",
    ),
    (
        "pt",
        "Qual é a capital do país? Os alunos têm de escolher a resposta certa. \
         Por que a água é importante para as plantas e os animais? O clima está a ficar mais quente. \
         Quantos anos durou a guerra na Europa? Complete a frase com a palavra que falta. \
         Qual afirmação sobre o rio está correta? O livro foi escrito por um autor famoso.",
    ),
    (
        "sv",
        "Vilken stad är landets huvudstad? Eleverna måste välja rätt svar. \
         Varför är vatten viktigt för växter och djur? Klimatet blir varmare på grund av utsläppen. \
         Hur många år varade kriget i Europa? Fyll i det saknade ordet i meningen. \
         Vilket påstående om floden är korrekt? Boken skrevs av en känd författare.",
    ),
    (
        "da",
        "Hvilken by er landets hovedstad? Eleverne skal vælge det rigtige svar. \
         Hvorfor er vand vigtigt for planter og dyr? Klimaet bliver varmere på grund af udledningen. \
         Hvor mange år varede krigen i Europa? Udfyld det manglende ord i sætningen. \
         Hvilket udsagn om floden er korrekt? Bogen blev skrevet af en kendt forfatter.",
    ),
    (
        "pl",
        "Które miasto jest stolicą kraju? Uczniowie muszą wybrać poprawną odpowiedź. \
         Dlaczego woda jest ważna dla roślin i zwierząt? Klimat staje się cieplejszy z powodu emisji. \
         Ile lat trwała wojna w Europie? Uzupełnij brakujące słowo w zdaniu. \
         Które stwierdzenie o rzece jest prawdziwe? Książka została napisana przez znanego autora.",
    ),
];

fn trigrams(text: &str) -> Vec<String> {
    let norm = crate::corpus::normalize_surface(text);
    if norm.is_empty() {
        return Vec::new();
    }
    let chars: Vec<char> = format!(" {norm} ").chars().collect();
    chars.windows(3).map(|w| w.iter().collect()).collect()
}

/// Character-trigram language model with add-one smoothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageModel {
    languages: Vec<String>,
    counts: Vec<BTreeMap<String, u32>>,
    totals: Vec<u64>,
    vocab_size: usize,
}

impl LanguageModel {
    /// Trains from `(language, text)` samples. Languages are listed in
    /// first-seen order of `languages`; samples for unknown languages are
    /// ignored.
    pub fn train<'a>(
        languages: &[String],
        samples: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Self {
        let position: HashMap<&str, usize> = languages
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();
        let mut counts = vec![BTreeMap::new(); languages.len()];
        let mut totals = vec![0u64; languages.len()];
        for (lang, text) in samples {
            let Some(&li) = position.get(lang) else { continue };
            for tri in trigrams(text) {
                *counts[li].entry(tri).or_insert(0) += 1;
                totals[li] += 1;
            }
        }
        let mut vocab = std::collections::BTreeSet::new();
        for c in &counts {
            vocab.extend(c.keys().cloned());
        }
        LanguageModel {
            languages: languages.to_vec(),
            counts,
            totals,
            vocab_size: vocab.len() + 1,
        }
    }

    /// Model over [`DEFAULT_LANGUAGES`] trained on built-in seed sentences.
    pub fn default_seeded() -> Self {
        let langs: Vec<String> = DEFAULT_LANGUAGES.iter().map(|s| s.to_string()).collect();
        Self::train(&langs, SEED_TEXT.iter().copied())
    }

    pub fn languages(&self) -> &[String] {
        &self.languages
    }

    /// Log-likelihood of `text` under each language.
    pub fn log_likelihoods(&self, text: &str) -> Vec<f64> {
        let tris = trigrams(text);
        (0..self.languages.len())
            .map(|li| {
                let denom = (self.totals[li] + self.vocab_size as u64) as f64;
                tris.iter()
                    .map(|t| {
                        let c = self.counts[li].get(t).copied().unwrap_or(0);
                        ((c as f64 + 1.0) / denom).ln()
                    })
                    .sum()
            })
            .collect()
    }
}

/// Posterior over the model's languages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguagePosterior {
    pub languages: Vec<String>,
    pub probs: Vec<f64>,
}

impl LanguagePosterior {
    pub fn argmax(&self) -> Option<&str> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &p) in self.probs.iter().enumerate() {
            if best.is_none_or(|(_, b)| p > b) {
                best = Some((i, p));
            }
        }
        best.map(|(i, _)| self.languages[i].as_str())
    }

    /// Σ_L P(L|a)·P(L|b); both posteriors must come from the same model.
    pub fn overlap(&self, other: &LanguagePosterior) -> f64 {
        self.probs.iter().zip(&other.probs).map(|(a, b)| a * b).sum()
    }
}

/// Posterior under a uniform prior. Text without any character trigram
/// yields the uniform posterior.
pub fn detect_language(text: &str, model: &LanguageModel) -> LanguagePosterior {
    let n = model.languages.len();
    let uniform = || vec![1.0 / n as f64; n];
    let probs = if n == 0 || trigrams(text).is_empty() {
        uniform()
    } else {
        let ll = model.log_likelihoods(text);
        let max = ll.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = ll.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / z).collect()
    };
    LanguagePosterior {
        languages: model.languages.clone(),
        probs,
    }
}
