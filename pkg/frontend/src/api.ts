// Thin typed client for the caremart HTTP API. The fetch implementation is
// injectable so tests can run without a server.

export interface Concept {
  concept_id: number;
  concept_name: string;
  vocabulary_id: string;
  concept_code: string;
}

export interface Page<T> {
  items: T[];
  total: number;
  page: number;
  page_size: number;
}

export interface AttritionRow {
  name: string;
  persons: number;
}

export interface Attrition {
  initial_events: number;
  initial_persons: number;
  after_rule: AttritionRow[];
  final_subjects: number;
}

export interface GenerateResult {
  subjects: number;
  attrition: Attrition;
}

export interface CohortRow {
  cohort_definition_id: number;
  subject_id: number;
  cohort_start_date: string;
  cohort_end_date: string;
}

export interface VariantCount {
  variant: string;
  count: number;
}

export interface VariantsResponse {
  concept_id: number;
  distinct_count: number;
  variants: VariantCount[];
}

export interface StatRecord {
  analysis_name: string;
  stratum_1: string | null;
  count_value: number;
  avg_value: number | null;
}

export interface PipelineStatus {
  stage: string;
  progress: number;
  completed: string[];
}

export class ApiError extends Error {
  constructor(
    public code: number,
    message: string,
  ) {
    super(message);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private base = "",
    private fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchImpl(this.base + path, init);
    const body = await resp.json();
    if (!resp.ok) {
      throw new ApiError(body.code ?? resp.status, body.message ?? "request failed");
    }
    return body as T;
  }

  async searchConcepts(query: string, page = 1, pageSize = 50): Promise<Page<Concept>> {
    // empty query issues no request at all
    if (query.trim() === "") {
      return { items: [], total: 0, page: 1, page_size: pageSize };
    }
    const params = new URLSearchParams({
      query: query.trim(),
      page: String(page),
      page_size: String(pageSize),
    });
    return this.request<Page<Concept>>(`/concepts?${params}`);
  }

  async listCohorts(): Promise<{ items: { id: number; name: string }[] }> {
    return this.request(`/cohorts`);
  }

  async getCohort(id: number): Promise<{ id: number; name: string; definition: unknown }> {
    return this.request(`/cohorts/${id}`);
  }

  async saveCohort(definition: unknown): Promise<{ id: number }> {
    return this.request(`/cohorts`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(definition),
    });
  }

  async generate(id: number): Promise<GenerateResult> {
    return this.request(`/cohorts/${id}/generate`, { method: "POST" });
  }

  async results(id: number, page = 1): Promise<Page<CohortRow>> {
    return this.request(`/cohorts/${id}/results?page=${page}`);
  }

  async variants(conceptId: number): Promise<VariantsResponse> {
    return this.request(`/noteconcepts/${conceptId}/variants`);
  }

  async stats(): Promise<{ items: StatRecord[] }> {
    return this.request(`/stats`);
  }

  async status(): Promise<PipelineStatus> {
    return this.request(`/status`);
  }
}
