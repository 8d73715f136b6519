/* Minimal pthread-backed implementation of the libgomp entry points that GCC
 * emits for `parallel for` regions. Linked into race-sanitizer builds in place
 * of libgomp so that every fork, join, barrier and work-share hand-off is a
 * pthread primitive the thread sanitizer can observe. */
#include <pthread.h>
#include <sched.h>
#include <stdbool.h>
#include <stdlib.h>
#include <time.h>

#define MAX_THREADS 256
#define WS_SLOTS 16

struct work_share {
  bool ull;
  bool up;
  int kind;
  long next, end, incr, chunk;
  unsigned long long unext, uend, uincr, uchunk;
};

struct team {
  unsigned nthreads;
  pthread_mutex_t lock;
  pthread_barrier_t barrier;
  unsigned ws_gen;
  struct work_share ws[WS_SLOTS];
};

static __thread struct team *cur_team;
static __thread unsigned cur_id;
static __thread unsigned cur_ws;
static __thread struct team solo_team;
static __thread bool solo_ready;

static int default_threads;
static pthread_mutex_t global_lock = PTHREAD_MUTEX_INITIALIZER;
static pthread_mutex_t atomic_lock = PTHREAD_MUTEX_INITIALIZER;
static pthread_mutex_t critical_lock = PTHREAD_MUTEX_INITIALIZER;

enum { KIND_STATIC, KIND_DYNAMIC, KIND_GUIDED };

static int env_threads(void) {
  pthread_mutex_lock(&global_lock);
  if (default_threads <= 0) {
    const char *s = getenv("OMP_NUM_THREADS");
    int n = s ? atoi(s) : 0;
    default_threads = n > 0 ? n : 1;
  }
  int n = default_threads;
  pthread_mutex_unlock(&global_lock);
  return n;
}

static struct team *team_or_solo(void) {
  if (cur_team) return cur_team;
  if (!solo_ready) {
    solo_team.nthreads = 1;
    pthread_mutex_init(&solo_team.lock, NULL);
    solo_ready = true;
  }
  cur_team = &solo_team;
  cur_id = 0;
  cur_ws = solo_team.ws_gen;
  return cur_team;
}

int omp_get_num_threads(void) { return cur_team ? (int)cur_team->nthreads : 1; }
int omp_get_thread_num(void) { return cur_team ? (int)cur_id : 0; }
int omp_get_max_threads(void) { return env_threads(); }
int omp_in_parallel(void) { return cur_team && cur_team->nthreads > 1; }
void omp_set_num_threads(int n) {
  pthread_mutex_lock(&global_lock);
  default_threads = n > 0 ? n : 1;
  pthread_mutex_unlock(&global_lock);
}
double omp_get_wtime(void) {
  struct timespec ts;
  clock_gettime(CLOCK_MONOTONIC, &ts);
  return (double)ts.tv_sec + (double)ts.tv_nsec * 1e-9;
}

struct worker_arg {
  void (*fn)(void *);
  void *data;
  struct team *team;
  unsigned id;
};

static void *worker(void *p) {
  struct worker_arg *a = p;
  cur_team = a->team;
  cur_id = a->id;
  cur_ws = 0;
  a->fn(a->data);
  return NULL;
}

void GOMP_parallel(void (*fn)(void *), void *data, unsigned num_threads,
                   unsigned flags) {
  (void)flags;
  unsigned n = num_threads ? num_threads : (unsigned)env_threads();
  if (n > MAX_THREADS) n = MAX_THREADS;
  struct team *team = calloc(1, sizeof *team);
  team->nthreads = n;
  pthread_mutex_init(&team->lock, NULL);
  pthread_barrier_init(&team->barrier, NULL, n);
  struct team *saved_team = cur_team;
  unsigned saved_id = cur_id, saved_ws = cur_ws;
  pthread_t tids[MAX_THREADS];
  struct worker_arg args[MAX_THREADS];
  for (unsigned i = 1; i < n; i++) {
    args[i] = (struct worker_arg){fn, data, team, i};
    pthread_create(&tids[i], NULL, worker, &args[i]);
  }
  cur_team = team;
  cur_id = 0;
  cur_ws = 0;
  fn(data);
  for (unsigned i = 1; i < n; i++) pthread_join(tids[i], NULL);
  cur_team = saved_team;
  cur_id = saved_id;
  cur_ws = saved_ws;
  pthread_barrier_destroy(&team->barrier);
  pthread_mutex_destroy(&team->lock);
  free(team);
}

void GOMP_barrier(void) {
  if (cur_team && cur_team->nthreads > 1) pthread_barrier_wait(&cur_team->barrier);
}

void GOMP_critical_start(void) { pthread_mutex_lock(&critical_lock); }
void GOMP_critical_end(void) { pthread_mutex_unlock(&critical_lock); }
void GOMP_atomic_start(void) { pthread_mutex_lock(&atomic_lock); }
void GOMP_atomic_end(void) { pthread_mutex_unlock(&atomic_lock); }

bool GOMP_single_start(void) {
  struct team *t = team_or_solo();
  pthread_mutex_lock(&t->lock);
  unsigned idx = cur_ws++;
  bool first = idx == t->ws_gen;
  if (first) t->ws_gen++;
  pthread_mutex_unlock(&t->lock);
  return first;
}

/* Claims the caller's next work-share slot, initialising it if this thread is
 * the first of the team to arrive. Returns the slot; caller holds no lock. */
static struct work_share *ws_enter(struct work_share init) {
  struct team *t = team_or_solo();
  pthread_mutex_lock(&t->lock);
  unsigned idx = cur_ws++;
  struct work_share *ws = &t->ws[idx % WS_SLOTS];
  if (idx == t->ws_gen) {
    *ws = init;
    t->ws_gen++;
  }
  pthread_mutex_unlock(&t->lock);
  return ws;
}

static struct work_share *ws_current(void) {
  struct team *t = cur_team;
  return t ? &t->ws[(cur_ws - 1) % WS_SLOTS] : NULL;
}

static bool grab(struct work_share *ws, long *istart, long *iend) {
  struct team *t = cur_team;
  if (!ws || !t) return false;
  pthread_mutex_lock(&t->lock);
  long span = ws->end - ws->next;
  long remaining = span / ws->incr;
  if (span % ws->incr) remaining++;
  if (remaining <= 0) {
    pthread_mutex_unlock(&t->lock);
    return false;
  }
  long take = ws->chunk;
  if (ws->kind == KIND_GUIDED) {
    long g = remaining / (long)(2 * t->nthreads);
    if (g > take) take = g;
  } else if (ws->kind == KIND_STATIC && ws->chunk <= 0) {
    take = (remaining + t->nthreads - 1) / t->nthreads;
  }
  if (take < 1) take = 1;
  if (take > remaining) take = remaining;
  *istart = ws->next;
  ws->next += take * ws->incr;
  *iend = ws->next;
  if ((ws->incr > 0 && *iend > ws->end) || (ws->incr < 0 && *iend < ws->end)) *iend = ws->end;
  pthread_mutex_unlock(&t->lock);
  /* Hand the core to another team member so that chunks interleave even on
   * a single CPU; otherwise one thread can drain the loop alone. */
  sched_yield();
  return true;
}

static bool grab_ull(struct work_share *ws, unsigned long long *istart,
                     unsigned long long *iend) {
  struct team *t = cur_team;
  if (!ws || !t) return false;
  pthread_mutex_lock(&t->lock);
  unsigned long long span = ws->up ? ws->uend - ws->unext : ws->unext - ws->uend;
  unsigned long long step = ws->up ? ws->uincr : -ws->uincr;
  unsigned long long remaining = (ws->up ? ws->uend > ws->unext : ws->unext > ws->uend)
                                     ? (span + step - 1) / step
                                     : 0;
  if (remaining == 0) {
    pthread_mutex_unlock(&t->lock);
    return false;
  }
  unsigned long long take = ws->uchunk ? ws->uchunk : 1;
  if (ws->kind == KIND_GUIDED) {
    unsigned long long g = remaining / (2ULL * t->nthreads);
    if (g > take) take = g;
  }
  if (take > remaining) take = remaining;
  *istart = ws->unext;
  ws->unext += take * ws->uincr;
  *iend = ws->unext;
  if (ws->up ? *iend > ws->uend : *iend < ws->uend) *iend = ws->uend;
  pthread_mutex_unlock(&t->lock);
  sched_yield();
  return true;
}

static bool loop_start(int kind, long start, long end, long incr, long chunk,
                       long *istart, long *iend) {
  struct work_share init = {.kind = kind, .next = start, .end = end,
                            .incr = incr, .chunk = chunk};
  return grab(ws_enter(init), istart, iend);
}

static bool loop_ull_start(int kind, bool up, unsigned long long start,
                           unsigned long long end, unsigned long long incr,
                           unsigned long long chunk, unsigned long long *istart,
                           unsigned long long *iend) {
  struct work_share init = {.ull = true, .up = up, .kind = kind, .unext = start,
                            .uend = end, .uincr = incr, .uchunk = chunk};
  return grab_ull(ws_enter(init), istart, iend);
}

#define LOOP_ENTRY(name, kind)                                                  \
  bool GOMP_loop_##name##_start(long s, long e, long i, long c, long *is,       \
                                long *ie) {                                     \
    return loop_start(kind, s, e, i, c, is, ie);                                \
  }                                                                             \
  bool GOMP_loop_##name##_next(long *is, long *ie) {                            \
    return grab(ws_current(), is, ie);                                          \
  }                                                                             \
  bool GOMP_loop_ull_##name##_start(bool up, unsigned long long s,              \
                                    unsigned long long e, unsigned long long i, \
                                    unsigned long long c,                       \
                                    unsigned long long *is,                     \
                                    unsigned long long *ie) {                   \
    return loop_ull_start(kind, up, s, e, i, c, is, ie);                        \
  }                                                                             \
  bool GOMP_loop_ull_##name##_next(unsigned long long *is,                      \
                                   unsigned long long *ie) {                    \
    return grab_ull(ws_current(), is, ie);                                      \
  }

LOOP_ENTRY(static, KIND_STATIC)
LOOP_ENTRY(dynamic, KIND_DYNAMIC)
LOOP_ENTRY(guided, KIND_GUIDED)
LOOP_ENTRY(nonmonotonic_dynamic, KIND_DYNAMIC)
LOOP_ENTRY(nonmonotonic_guided, KIND_GUIDED)
LOOP_ENTRY(runtime, KIND_DYNAMIC)
LOOP_ENTRY(nonmonotonic_runtime, KIND_DYNAMIC)
LOOP_ENTRY(maybe_nonmonotonic_runtime, KIND_DYNAMIC)

void GOMP_loop_end(void) { GOMP_barrier(); }
void GOMP_loop_end_nowait(void) {}
