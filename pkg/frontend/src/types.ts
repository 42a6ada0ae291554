/** Payload shapes of the review service (the single source of truth is the
 * service; these mirror it field for field). */

export interface KeyphraseCount {
  phrase: string;
  count: number;
}

export interface ClusterView {
  id: string;
  name: string;
  description: string;
  status: "active" | "excluded" | "merged";
  merged_into: string | null;
  flagged: boolean;
  member_count: number;
  keyphrases: KeyphraseCount[];
}

export interface BadCaseSample {
  problem_id: string;
  question: string;
  reference_solution: string;
  reference_answer: string;
  model_reasoning: string;
  model_answer: string | null;
}

export type ActionKind = "merge" | "exclude" | "rename";

/** One staged review action; unused fields stay empty strings / arrays so the
 * wire format is fixed-shape. */
export interface ReviewActionWire {
  action: ActionKind;
  from_ids: string[];
  into: string;
  cluster_id: string;
  reason: string;
  new_name: string;
}

export interface ReviewPayload {
  actions: ReviewActionWire[];
  author: string;
  timestamp: string;
}

export interface Diagnostic {
  action_index: number;
  message: string;
}

export interface SubmitRejection {
  accepted: false;
  diagnostics: Diagnostic[];
}

export interface SubmitSuccess {
  accepted: true;
  written: string;
  actions: number;
}
