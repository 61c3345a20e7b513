use std::fmt;

/// Split sizes and label cardinality of a published benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitCounts {
    pub train: usize,
    pub test: usize,
    pub prompt: usize,
    pub relations: usize,
}

/// The four benchmarks with published split sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KnownDataset {
    Tacred,
    Tacrev,
    ReTacred,
    SemEval,
}

impl KnownDataset {
    pub const ALL: [KnownDataset; 4] =
        [KnownDataset::Tacred, KnownDataset::Tacrev, KnownDataset::ReTacred, KnownDataset::SemEval];

    /// Case-insensitive lookup; hyphens and underscores are ignored so
    /// `re_tacred`, `Re-TACRED` and `retacred` all resolve.
    pub fn from_name(name: &str) -> Option<Self> {
        let key: String = name.chars().filter(|c| *c != '-' && *c != '_').collect::<String>().to_ascii_lowercase();
        match key.as_str() {
            "tacred" => Some(KnownDataset::Tacred),
            "tacrev" => Some(KnownDataset::Tacrev),
            "retacred" => Some(KnownDataset::ReTacred),
            "semeval" | "semeval2010" | "semeval2010task8" => Some(KnownDataset::SemEval),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KnownDataset::Tacred => "TACRED",
            KnownDataset::Tacrev => "TACREV",
            KnownDataset::ReTacred => "Re-TACRED",
            KnownDataset::SemEval => "SemEVAL",
        }
    }

    pub fn counts(self) -> SplitCounts {
        match self {
            KnownDataset::Tacred | KnownDataset::Tacrev => {
                SplitCounts { train: 68124, test: 15509, prompt: 22631, relations: 42 }
            }
            KnownDataset::ReTacred => SplitCounts { train: 58465, test: 13418, prompt: 19584, relations: 40 },
            KnownDataset::SemEval => SplitCounts { train: 8000, test: 2717, prompt: 8000, relations: 19 },
        }
    }

    pub fn negative_label(self) -> &'static str {
        match self {
            KnownDataset::SemEval => "Other",
            _ => "no_relation",
        }
    }

    /// SemEval labels carry `(e1,e2)` / `(e2,e1)` direction markers.
    pub fn directional(self) -> bool {
        matches!(self, KnownDataset::SemEval)
    }

    /// Whether the benchmark ships a split that can feed prompt data without
    /// reusing training sentences.
    pub fn has_heldout_prompt_split(self) -> bool {
        !matches!(self, KnownDataset::SemEval)
    }

    /// Position in report tables.
    pub fn report_order(self) -> usize {
        self as usize
    }
}

impl fmt::Display for KnownDataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The 42 TACRED relation labels (TACREV shares the same inventory).
pub const TACRED_LABELS: [&str; 42] = [
    "no_relation",
    "org:alternate_names",
    "org:city_of_headquarters",
    "org:country_of_headquarters",
    "org:dissolved",
    "org:founded",
    "org:founded_by",
    "org:member_of",
    "org:members",
    "org:number_of_employees/members",
    "org:parents",
    "org:political/religious_affiliation",
    "org:shareholders",
    "org:stateorprovince_of_headquarters",
    "org:subsidiaries",
    "org:top_members/employees",
    "org:website",
    "per:age",
    "per:alternate_names",
    "per:cause_of_death",
    "per:charges",
    "per:children",
    "per:cities_of_residence",
    "per:city_of_birth",
    "per:city_of_death",
    "per:countries_of_residence",
    "per:country_of_birth",
    "per:country_of_death",
    "per:date_of_birth",
    "per:date_of_death",
    "per:employee_of",
    "per:origin",
    "per:other_family",
    "per:parents",
    "per:religion",
    "per:schools_attended",
    "per:siblings",
    "per:spouse",
    "per:stateorprovince_of_birth",
    "per:stateorprovince_of_death",
    "per:stateorprovinces_of_residence",
    "per:title",
];

/// The 19 SemEval-2010 Task 8 labels: nine relations in both directions plus `Other`.
pub const SEMEVAL_LABELS: [&str; 19] = [
    "Cause-Effect(e1,e2)",
    "Cause-Effect(e2,e1)",
    "Component-Whole(e1,e2)",
    "Component-Whole(e2,e1)",
    "Content-Container(e1,e2)",
    "Content-Container(e2,e1)",
    "Entity-Destination(e1,e2)",
    "Entity-Destination(e2,e1)",
    "Entity-Origin(e1,e2)",
    "Entity-Origin(e2,e1)",
    "Instrument-Agency(e1,e2)",
    "Instrument-Agency(e2,e1)",
    "Member-Collection(e1,e2)",
    "Member-Collection(e2,e1)",
    "Message-Topic(e1,e2)",
    "Message-Topic(e2,e1)",
    "Other",
    "Product-Producer(e1,e2)",
    "Product-Producer(e2,e1)",
];
