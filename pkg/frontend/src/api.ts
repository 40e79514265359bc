// Typed client for the review service JSON API. The service is the single
// source of truth; nothing here caches or rewrites candidate content.

export interface Candidate {
  candidate_id: string;
  source_pair_id: string;
  replaced_slot: number;
  original_sentence: string;
  generated_text: string;
  partner_sentence: string;
  inherited_score: number;
  status: string;
  filter_reason: string | null;
  reviewer: string | null;
  note: string | null;
  decided_at: string | null;
}

export interface CandidatePage {
  items: Candidate[];
  total: number;
  limit: number;
  offset: number;
}

export interface Stats {
  pending: number;
  accepted: number;
  rejected: number;
  auto_rejected_refusal: number;
  auto_rejected_policy: number;
  failed: number;
  total: number;
}

export type Verdict = "accept" | "reject";

export class NetworkError extends Error {}

export class ConflictError extends Error {}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export interface ReviewApi {
  listPending(limit: number, offset: number): Promise<CandidatePage>;
  getStats(): Promise<Stats>;
  submitDecision(
    candidateId: string,
    verdict: Verdict,
    reviewer: string,
    note?: string,
  ): Promise<Candidate>;
}

async function errorDetail(response: Response): Promise<string> {
  try {
    const body = (await response.json()) as { detail?: string };
    return body.detail ?? response.statusText;
  } catch {
    return response.statusText;
  }
}

export class HttpReviewApi implements ReviewApi {
  constructor(private baseUrl: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await fetch(this.baseUrl + path, init);
    } catch (err) {
      throw new NetworkError(String(err));
    }
    if (response.status === 409) {
      throw new ConflictError(await errorDetail(response));
    }
    if (!response.ok) {
      throw new ApiError(response.status, await errorDetail(response));
    }
    return (await response.json()) as T;
  }

  listPending(limit: number, offset: number): Promise<CandidatePage> {
    return this.request<CandidatePage>(
      `/api/candidates?status=pending&limit=${limit}&offset=${offset}`,
    );
  }

  getStats(): Promise<Stats> {
    return this.request<Stats>("/api/stats");
  }

  submitDecision(
    candidateId: string,
    verdict: Verdict,
    reviewer: string,
    note?: string,
  ): Promise<Candidate> {
    return this.request<Candidate>(
      `/api/candidates/${encodeURIComponent(candidateId)}/decision`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ verdict, reviewer, note: note ?? null }),
      },
    );
  }
}
