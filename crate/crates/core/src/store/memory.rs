use std::sync::{Mutex, MutexGuard};

use super::{Index, LinkGrant, StoreError, StoredEventRecord, TraceStore};
use crate::analytics::RubricScore;
use crate::domain::{Exam, QuestionId, SessionId};
use crate::session::Session;

/// Volatile store for tests and throwaway runs.
#[derive(Debug, Default)]
pub struct MemoryStore {
    index: Mutex<Index>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    fn index(&self) -> MutexGuard<'_, Index> {
        self.index.lock().unwrap_or_else(|e| e.into_inner())
    }
}

impl TraceStore for MemoryStore {
    fn put_exam(&self, exam: &Exam) -> Result<(), StoreError> {
        let mut idx = self.index();
        idx.check_exam(exam)?;
        idx.insert_exam(exam.clone());
        Ok(())
    }

    fn exams(&self) -> Result<Vec<Exam>, StoreError> {
        Ok(self.index().exams())
    }

    fn create_session(&self, session: &Session) -> Result<(), StoreError> {
        let mut idx = self.index();
        idx.check_session(session)?;
        idx.insert_session(session.clone());
        Ok(())
    }

    fn sessions(&self) -> Result<Vec<Session>, StoreError> {
        Ok(self.index().sessions())
    }

    fn session(&self, id: &SessionId) -> Result<Session, StoreError> {
        Ok(self.index().entry(id)?.session.clone())
    }

    fn append_event(&self, record: &StoredEventRecord) -> Result<(), StoreError> {
        let mut idx = self.index();
        idx.check_append(record)?;
        idx.insert_event(record.clone());
        Ok(())
    }

    fn load_trace(
        &self,
        session: &SessionId,
        question: Option<&QuestionId>,
    ) -> Result<Vec<StoredEventRecord>, StoreError> {
        self.index().load(session, question)
    }

    fn append_score(&self, score: &RubricScore) -> Result<(), StoreError> {
        let mut idx = self.index();
        idx.check_score(score)?;
        idx.insert_score(score.clone());
        Ok(())
    }

    fn scores(&self, session: &SessionId) -> Result<Vec<RubricScore>, StoreError> {
        self.index().scores(session)
    }

    fn put_link(&self, grant: &LinkGrant) -> Result<(), StoreError> {
        self.index().links.push(grant.clone());
        Ok(())
    }

    fn links(&self) -> Result<Vec<LinkGrant>, StoreError> {
        Ok(self.index().links.clone())
    }
}
