use crate::ingest::{Bill, LobbyLine};

/// Instantiates the five-way classification prompt.
pub fn format_prompt(
    bill_id: &str,
    short_title: &str,
    official_title: &str,
    description: &str,
) -> String {
    format!(
        "Classify the given text that explicitly describes lobbying activities for bill {bill_id} \
         into one of the five types: Support, Oppose, Amend, Monitor, or Mention without explanation.\n\
         \n\
         {bill_id} short title: {short_title}\n\
         {bill_id} official title: {official_title}\n\
         Text: {description}\n\
         Answer:"
    )
}

pub fn build_prompt(bill: &Bill, line: &LobbyLine) -> String {
    format_prompt(
        &bill.bill_id.label(),
        &bill.short_title,
        &bill.official_title,
        &line.text,
    )
}
